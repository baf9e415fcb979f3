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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coseg/rng.hpp"
#include "coseg/tensor.hpp"

namespace coseg {

inline constexpr std::size_t kDefaultEmbedDim = 256;
inline constexpr std::size_t kDefaultDepth = 2;

// C channels over an H×W grid, held as the flattened C×(H·W) matrix.
// Column index is y·W + x.
struct FeatureMap {
  Var values;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t channels() const { return values.rows(); }
  std::size_t locations() const { return height * width; }
};

// Projected class-word conditioning vector z, stored as a d×1 column.
struct SemanticVector {
  Var values;
  std::size_t dim() const { return values.rows(); }
};

// Visual rows 0..C-1 followed by d spatially constant rows holding z.
struct AugmentedFeatureMap {
  Var values;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t visual_channels = 0;
};

// raw(i, j) pairs support location i with query location j.
struct AffinityMatrix {
  Var raw;
  Var normalized_c;  // softmax over support locations, WH_s × WH_q
  Var normalized_r;  // softmax over query locations, WH_q × WH_s
};

struct AttentionSummary {
  Var values;  // (C+d) × WH
};

struct ProjectionParams {
  Var weight;  // E × d
  Var bias;    // d × 1
};

// One co-attention block. W_co spans the augmented channel dimension C+d.
struct CoAttentionParams {
  Var w_co;         // (C+d) × (C+d)
  Var w_gate;       // 1 × (C+d)
  Var b_gate;       // 1 × 1
  Var reproject_w;  // C × ((C+d) + C)
  Var reproject_b;  // C × 1
};

enum class AffinityDirection { Column, Row };

ProjectionParams init_projection(std::size_t word_dim, std::size_t embed_dim, Rng& rng);
// W_co starts at `identity_gain`·I plus small noise so initial attention is
// already similarity-driven.
CoAttentionParams init_coattention(std::size_t channels, std::size_t embed_dim, Rng& rng,
                                   double identity_gain = 1.0);

SemanticVector project_embedding(std::span<const double> word, const ProjectionParams& params);
AugmentedFeatureMap tile_concat(const FeatureMap& features, const SemanticVector& z);
Var affinity(const AugmentedFeatureMap& support, const AugmentedFeatureMap& query,
             const Var& w_co);
Var normalize_affinity(const Var& raw, AffinityDirection direction);
AttentionSummary attention_summary(const AugmentedFeatureMap& source, const Var& normalized);

struct GateResult {
  Var gate;  // 1 × WH, each entry in (0, 1)
  AttentionSummary gated;
};
GateResult gate(const AttentionSummary& summary, const Var& w_gate, const Var& b_gate);

// Intermediate values of one block, exposed for invariant checks.
struct CoAttentionTrace {
  AugmentedFeatureMap support_aug;
  AugmentedFeatureMap query_aug;
  AffinityMatrix affinity;
  AttentionSummary query_summary;    // U_q
  AttentionSummary support_summary;  // U_s
  GateResult query_gate;
  GateResult support_gate;
};

struct CoAttentionOutput {
  FeatureMap query;    // F_q
  FeatureMap support;  // F_s
  CoAttentionTrace trace;
};

CoAttentionOutput coattention_block(const FeatureMap& support, const FeatureMap& query,
                                    const SemanticVector& z, const CoAttentionParams& params);

// Block k > 1 consumes the (F_s, F_q) of block k-1. Depth is blocks.size().
struct StackedOutput {
  FeatureMap query;
  FeatureMap support;
  std::vector<CoAttentionTrace> traces;
};
StackedOutput stacked_coattention(const FeatureMap& support, const FeatureMap& query,
                                  const SemanticVector& z,
                                  std::span<const CoAttentionParams> blocks);

}  // namespace coseg
