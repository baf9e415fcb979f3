/* Copyright 2026 The coseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "coseg/coattention.hpp"

#include <cmath>
#include <string>

#include "coseg/error.hpp"

namespace coseg {

namespace {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * standard_normal(rng);
  return t;
}

}  // namespace

ProjectionParams init_projection(std::size_t word_dim, std::size_t embed_dim, Rng& rng) {
  if (word_dim == 0 || embed_dim == 0) throw ConfigError("projection extents must be positive");
  return {
      Var::leaf(gaussian({word_dim, embed_dim}, 1.0 / std::sqrt(double(word_dim)), rng)),
      Var::leaf(Tensor({embed_dim, 1})),
  };
}

CoAttentionParams init_coattention(std::size_t channels, std::size_t embed_dim, Rng& rng,
                                   double identity_gain) {
  if (channels == 0) throw ConfigError("channel count must be positive");
  const std::size_t aug = channels + embed_dim;
  Tensor w_co = gaussian({aug, aug}, 0.1 / std::sqrt(double(aug)), rng);
  for (std::size_t i = 0; i < aug; ++i) w_co(i, i) += identity_gain;
  return {
      Var::leaf(std::move(w_co)),
      Var::leaf(gaussian({1, aug}, 1.0 / std::sqrt(double(aug)), rng)),
      Var::leaf(Tensor({1, 1})),
      Var::leaf(gaussian({channels, aug + channels}, 1.0 / std::sqrt(double(aug + channels)),
                         rng)),
      Var::leaf(Tensor({channels, 1})),
  };
}

SemanticVector project_embedding(std::span<const double> word, const ProjectionParams& params) {
  const std::size_t expected = params.weight.rows();
  if (word.size() != expected) {
    throw ConfigError("word embedding has dimension " + std::to_string(word.size()) +
                      " but the projection layer expects " + std::to_string(expected));
  }
  const Var e = Var::constant(Tensor::column(word));
  return {add_bias(matmul(transpose(params.weight), e), params.bias)};
}

AugmentedFeatureMap tile_concat(const FeatureMap& features, const SemanticVector& z) {
  const std::size_t wh = features.values.cols();
  if (wh != features.locations()) {
    throw DimensionError("feature map holds " + std::to_string(wh) + " columns for a " +
                         std::to_string(features.height) + "x" +
                         std::to_string(features.width) + " grid");
  }
  return {concat_rows(features.values, tile_columns(z.values, wh)), features.height,
          features.width, features.channels()};
}

Var affinity(const AugmentedFeatureMap& support, const AugmentedFeatureMap& query,
             const Var& w_co) {
  if (support.values.rows() != query.values.rows()) {
    throw DimensionError("affinity: support has " + std::to_string(support.values.rows()) +
                         " channels, query has " + std::to_string(query.values.rows()));
  }
  return matmul(transpose(support.values), matmul(w_co, query.values));
}

Var normalize_affinity(const Var& raw, AffinityDirection direction) {
  return direction == AffinityDirection::Column ? softmax_columns(raw)
                                                : softmax_columns(transpose(raw));
}

AttentionSummary attention_summary(const AugmentedFeatureMap& source, const Var& normalized) {
  return {matmul(source.values, normalized)};
}

GateResult gate(const AttentionSummary& summary, const Var& w_gate, const Var& b_gate) {
  Var g = sigmoid(add_bias(matmul(w_gate, summary.values), b_gate));
  return {g, {hadamard(summary.values, g)}};
}

namespace {

FeatureMap reproject(const AttentionSummary& gated, const FeatureMap& visual,
                     const CoAttentionParams& params) {
  Var mixed = matmul(params.reproject_w, concat_rows(gated.values, visual.values));
  return {add_bias(mixed, params.reproject_b), visual.height, visual.width};
}

}  // namespace

CoAttentionOutput coattention_block(const FeatureMap& support, const FeatureMap& query,
                                    const SemanticVector& z, const CoAttentionParams& params) {
  if (support.channels() != query.channels()) {
    throw DimensionError("co-attention: support has " + std::to_string(support.channels()) +
                         " channels, query has " + std::to_string(query.channels()));
  }
  CoAttentionTrace t;
  t.support_aug = tile_concat(support, z);
  t.query_aug = tile_concat(query, z);
  t.affinity.raw = affinity(t.support_aug, t.query_aug, params.w_co);
  t.affinity.normalized_c = normalize_affinity(t.affinity.raw, AffinityDirection::Column);
  t.affinity.normalized_r = normalize_affinity(t.affinity.raw, AffinityDirection::Row);
  t.query_summary = attention_summary(t.support_aug, t.affinity.normalized_c);
  t.support_summary = attention_summary(t.query_aug, t.affinity.normalized_r);
  t.query_gate = gate(t.query_summary, params.w_gate, params.b_gate);
  t.support_gate = gate(t.support_summary, params.w_gate, params.b_gate);

  FeatureMap fq = reproject(t.query_gate.gated, query, params);
  FeatureMap fs = reproject(t.support_gate.gated, support, params);
  return {std::move(fq), std::move(fs), std::move(t)};
}

StackedOutput stacked_coattention(const FeatureMap& support, const FeatureMap& query,
                                  const SemanticVector& z,
                                  std::span<const CoAttentionParams> blocks) {
  if (blocks.empty()) throw ContractError("stacked co-attention needs depth >= 1");
  StackedOutput out{query, support, {}};
  for (const auto& params : blocks) {
    auto step = coattention_block(out.support, out.query, z, params);
    out.query = std::move(step.query);
    out.support = std::move(step.support);
    out.traces.push_back(std::move(step.trace));
  }
  return out;
}

}  // namespace coseg
