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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coseg/coattention.hpp"
#include "coseg/error.hpp"
#include "coseg/gradcheck.hpp"
#include "support.hpp"

using namespace coseg;
using coseg::testing::max_abs_diff;
using coseg::testing::random_matrix;

namespace {

FeatureMap feature_map(const Tensor& m, std::size_t h, std::size_t w) {
  return {Var::constant(m), h, w};
}

SemanticVector semantic(const Tensor& column) { return {Var::constant(column)}; }

Tensor permute_columns(const Tensor& m, const std::vector<std::size_t>& perm) {
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t j = 0; j < m.cols(); ++j) out(r, j) = m(r, perm[j]);
  return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

// Random block with a nonzero gate so the gated path is exercised.
CoAttentionParams random_block(Rng& rng, std::size_t c, std::size_t d) {
  CoAttentionParams p = init_coattention(c, d, rng);
  const std::size_t a = c + d;
  p.w_gate = Var::leaf(random_matrix(rng, 1, a, 0.3));
  p.b_gate = Var::leaf(random_matrix(rng, 1, 1, 0.3));
  p.reproject_w = Var::leaf(random_matrix(rng, c, a + c, 0.3));
  p.reproject_b = Var::leaf(random_matrix(rng, c, 1, 0.1));
  return p;
}

}  // namespace

TEST_SUITE("coattention") {
  TEST_CASE("project_embedding examples") {
    Rng rng(1);
    const std::vector<double> e300(300, 0.25);
    ProjectionParams zero{Var::leaf(Tensor({300, kDefaultEmbedDim})),
                          Var::leaf(Tensor({kDefaultEmbedDim, 1}))};
    const auto z0 = project_embedding(e300, zero);
    CHECK(z0.dim() == 256);
    CHECK(z0.values.value() == Tensor({256, 1}));

    const auto z = project_embedding(e300, init_projection(300, kDefaultEmbedDim, rng));
    CHECK(z.dim() == 256);

    ProjectionParams small{Var::leaf(Tensor::matrix({{1, 0}, {0, 2}})),
                           Var::leaf(Tensor::matrix({{1}, {1}}))};
    const std::vector<double> e{3, 4};
    CHECK(project_embedding(e, small).values.value() == Tensor::matrix({{4}, {9}}));

    const std::vector<double> wrong(5, 1.0);
    CHECK_THROWS_AS(project_embedding(wrong, small), ConfigError);
  }

  TEST_CASE("tile_concat examples") {
    const auto fm = feature_map(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}), 1, 3);
    const auto aug = tile_concat(fm, semantic(Tensor::matrix({{7}})));
    CHECK(aug.values.value() == Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 7, 7}}));
    CHECK(aug.visual_channels == 2);

    const auto zero = tile_concat(fm, semantic(Tensor({4, 1})));
    for (std::size_t r = 2; r < 6; ++r)
      for (std::size_t j = 0; j < 3; ++j) CHECK(zero.values.value()(r, j) == 0.0);

    Var z = Var::leaf(Tensor::matrix({{0.3}, {-1.2}}));
    backward(sum(tile_concat(fm, SemanticVector{z}).values));
    CHECK(*z.grad() == Tensor({2, 1}, 3.0));
  }

  TEST_CASE("affinity examples") {
    auto aug = [](const Tensor& m) { return AugmentedFeatureMap{Var::constant(m), 1, m.cols(), 0}; };
    const Var eye = Var::constant(Tensor::identity(2));
    CHECK(affinity(aug(Tensor::identity(2)), aug(Tensor::identity(2)), eye).value() ==
          Tensor::identity(2));
    CHECK(affinity(aug(Tensor::identity(2)), aug(Tensor({2, 2})), eye).value() == Tensor({2, 2}));
    CHECK(affinity(aug(Tensor::matrix({{1, 0}, {0, 2}})), aug(Tensor::matrix({{1, 1}, {1, 0}})),
                   eye)
              .value() == Tensor::matrix({{1, 1}, {2, 0}}));
    // Different spatial sizes give a rectangular affinity.
    CHECK(affinity(aug(Tensor({2, 3})), aug(Tensor({2, 5})), eye).value().shape() == Shape{3, 5});
    CHECK_THROWS_AS(affinity(aug(Tensor({2, 2})), aug(Tensor({3, 2})), eye), DimensionError);
  }

  TEST_CASE("normalize_affinity examples") {
    const auto zc = normalize_affinity(Var::constant(Tensor({2, 2})), AffinityDirection::Column);
    CHECK(zc.value() == Tensor({2, 2}, 0.5));
    const auto c = normalize_affinity(Var::constant(Tensor::matrix({{1, 0}, {2, 0}})),
                                      AffinityDirection::Column);
    CHECK(std::abs(c.value()(0, 0) - 0.268941) < 1e-6);
    CHECK(std::abs(c.value()(1, 0) - 0.731059) < 1e-6);

    Rng rng(2);
    const Tensor s = random_matrix(rng, 4, 6, 3.0);
    const Tensor row = normalize_affinity(Var::constant(s), AffinityDirection::Row).value();
    const Tensor viaT =
        normalize_affinity(Var::constant(s.transposed()), AffinityDirection::Column).value();
    CHECK(row == viaT);
    CHECK(row.shape() == Shape{6, 4});
  }

  TEST_CASE("attention_summary examples") {
    const Tensor vs = Tensor::matrix({{1, 0, 5}, {0, 2, -1}});
    AugmentedFeatureMap src{Var::constant(vs), 1, 3, 2};
    const auto one_hot =
        attention_summary(src, Var::constant(Tensor::matrix({{0}, {0}, {1}}))).values.value();
    CHECK(one_hot == Tensor::matrix({{5}, {-1}}));
    const auto avg =
        attention_summary(src, Var::constant(Tensor({3, 2}, 1.0 / 3.0))).values.value();
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(avg(0, j) - 2.0) < 1e-12);
      CHECK(std::abs(avg(1, j) - 1.0 / 3.0) < 1e-12);
    }
    AugmentedFeatureMap src2{Var::constant(Tensor::matrix({{1, 0}, {0, 2}})), 1, 2, 2};
    CHECK(attention_summary(src2, Var::constant(Tensor::matrix({{0.25, 1}, {0.75, 0}})))
              .values.value() == Tensor::matrix({{0.25, 1}, {1.5, 0}}));
    CHECK_THROWS_AS(attention_summary(src2, Var::constant(Tensor({3, 1}))), DimensionError);
  }

  TEST_CASE("gate examples") {
    const AttentionSummary u{Var::constant(Tensor::matrix({{1, -2}, {3, 4}}))};
    const auto half = gate(u, Var::constant(Tensor({1, 2})), Var::constant(Tensor({1, 1})));
    CHECK(half.gate.value() == Tensor({1, 2}, 0.5));
    CHECK(half.gated.values.value() == Tensor::matrix({{0.5, -1}, {1.5, 2}}));

    const auto sat =
        gate(u, Var::constant(Tensor({1, 2})), Var::constant(Tensor::matrix({{100}})));
    CHECK(max_abs_diff(sat.gated.values.value(), u.values.value()) <= 1e-40 * 4.0);

    const auto g = gate(AttentionSummary{Var::constant(Tensor::matrix({{1}, {1}}))},
                        Var::constant(Tensor::matrix({{1, 1}})), Var::constant(Tensor({1, 1})));
    CHECK(std::abs(g.gate.value()[0] - 0.880797) < 1e-6);
    CHECK(std::abs(g.gated.values.value()(0, 0) - 0.880797) < 1e-6);
    CHECK(std::abs(g.gated.values.value()(1, 0) - 0.880797) < 1e-6);
  }

  TEST_CASE("coattention_block examples") {
    Rng rng(9);
    const std::size_t c = 3, d = 2;
    const auto params = random_block(rng, c, d);
    const auto vs = feature_map(random_matrix(rng, c, 6), 2, 3);
    const auto vq = feature_map(random_matrix(rng, c, 4), 2, 2);
    const auto z = semantic(random_matrix(rng, d, 1));
    const auto out = coattention_block(vs, vq, z, params);
    CHECK(out.query.values.shape() == Shape{c, 4});
    CHECK(out.query.height == 2);
    CHECK(out.query.width == 2);
    CHECK(out.support.values.shape() == Shape{c, 6});
    CHECK(out.support.width == 3);

    // All-zero inputs with zero biases give all-zero outputs.
    CoAttentionParams zb = params;
    zb.reproject_b = Var::constant(Tensor({c, 1}));
    const auto zero = coattention_block(feature_map(Tensor({c, 6}), 2, 3),
                                        feature_map(Tensor({c, 4}), 2, 2),
                                        semantic(Tensor({d, 1})), zb);
    CHECK(zero.query.values.value() == Tensor({c, 4}));

    CHECK_THROWS_AS(coattention_block(feature_map(Tensor({c + 1, 6}), 2, 3), vq, z, params),
                    DimensionError);
  }

  TEST_CASE("stacked_coattention depth laws") {
    Rng rng(21);
    const std::size_t c = 4, d = 3;
    std::vector<CoAttentionParams> blocks{random_block(rng, c, d), random_block(rng, c, d)};
    const auto vs = feature_map(random_matrix(rng, c, 9), 3, 3);
    const auto vq = feature_map(random_matrix(rng, c, 9), 3, 3);
    const auto z = semantic(random_matrix(rng, d, 1));

    const auto single = coattention_block(vs, vq, z, blocks[0]);
    const auto d1 = stacked_coattention(vs, vq, z, std::span(blocks).first(1));
    CHECK(d1.query.values.value() == single.query.values.value());
    CHECK(d1.support.values.value() == single.support.values.value());

    const auto d2 = stacked_coattention(vs, vq, z, blocks);
    CHECK(d2.traces.size() == 2);
    CHECK(max_abs_diff(d2.query.values.value(), d1.query.values.value()) > 1e-6);
    CHECK(kDefaultDepth == 2);

    CHECK_THROWS_AS(stacked_coattention(vs, vq, z, std::span<const CoAttentionParams>{}),
                    ContractError);
  }

  TEST_CASE("attention invariants on random inputs") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t c = 1 + uniform_index(rng, 5), d = 1 + uniform_index(rng, 4);
      const std::size_t hs = 1 + uniform_index(rng, 3), ws = 1 + uniform_index(rng, 3);
      const std::size_t hq = 1 + uniform_index(rng, 3), wq = 1 + uniform_index(rng, 3);
      std::vector<CoAttentionParams> blocks{random_block(rng, c, d), random_block(rng, c, d)};
      const Tensor vs = random_matrix(rng, c, hs * ws, 3.0);
      const Tensor vq = random_matrix(rng, c, hq * wq, 3.0);
      const auto z = semantic(random_matrix(rng, d, 1));
      const auto out =
          stacked_coattention(feature_map(vs, hs, ws), feature_map(vq, hq, wq), z, blocks);

      for (const auto& tr : out.traces) {
        for (const Var* m : {&tr.affinity.normalized_c, &tr.affinity.normalized_r}) {
          const Tensor& s = m->value();
          for (std::size_t j = 0; j < s.cols(); ++j) {
            double total = 0.0;
            for (std::size_t i = 0; i < s.rows(); ++i) total += s(i, j);
            CHECK(std::abs(total - 1.0) <= 1e-9);
          }
        }
        for (const GateResult* g : {&tr.query_gate, &tr.support_gate})
          for (double v : g->gate.value().values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
          }
        const Tensor& src = tr.support_aug.values.value();
        const Tensor& uq = tr.query_summary.values.value();
        for (std::size_t r = 0; r < src.rows(); ++r) {
          double lo = src(r, 0), hi = src(r, 0);
          for (std::size_t j = 0; j < src.cols(); ++j) {
            lo = std::min(lo, src(r, j));
            hi = std::max(hi, src(r, j));
          }
          for (std::size_t j = 0; j < uq.cols(); ++j) {
            CHECK(uq(r, j) >= lo - 1e-12);
            CHECK(uq(r, j) <= hi + 1e-12);
          }
        }
        // Rows C.. of the augmented map are spatially constant.
        const std::size_t vc = tr.query_aug.visual_channels;
        const Tensor& qa = tr.query_aug.values.value();
        for (std::size_t r = vc; r < qa.rows(); ++r)
          for (std::size_t j = 1; j < qa.cols(); ++j) CHECK(qa(r, j) == qa(r, 0));
      }
    }
  }

  TEST_CASE("support permutation invariance and query permutation equivariance") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t c = 2 + uniform_index(rng, 4), d = 1 + uniform_index(rng, 3);
      const std::size_t hs = 2 + uniform_index(rng, 2), hq = 2 + uniform_index(rng, 2);
      const CoAttentionParams params = random_block(rng, c, d);
      const Tensor vs = random_matrix(rng, c, hs * hs, 2.0);
      const Tensor vq = random_matrix(rng, c, hq * hq, 2.0);
      const auto z = semantic(random_matrix(rng, d, 1));
      const auto base = coattention_block(feature_map(vs, hs, hs), feature_map(vq, hq, hq), z,
                                          params);

      const auto ps = random_permutation(rng, hs * hs);
      const auto moved_s = coattention_block(feature_map(permute_columns(vs, ps), hs, hs),
                                             feature_map(vq, hq, hq), z, params);
      CHECK(max_abs_diff(moved_s.query.values.value(), base.query.values.value()) <= 1e-12);

      const auto pq = random_permutation(rng, hq * hq);
      const auto moved_q = coattention_block(feature_map(vs, hs, hs),
                                             feature_map(permute_columns(vq, pq), hq, hq), z,
                                             params);
      CHECK(max_abs_diff(moved_q.query.values.value(),
                         permute_columns(base.query.values.value(), pq)) <= 1e-12);
    }
  }

  TEST_CASE("word embedding changes the output when the support holds two clusters") {
    Rng rng(4);
    const std::size_t c = 4, d = 3;
    const CoAttentionParams params = random_block(rng, c, d);
    Tensor vs({c, 4});
    for (std::size_t j = 0; j < 4; ++j) {
      vs(0, j) = j < 2 ? 2.0 : 0.0;
      vs(1, j) = j < 2 ? 0.0 : 2.0;
    }
    const Tensor vq = random_matrix(rng, c, 4);
    const std::vector<double> cat{1, 0, 0, 0, 0}, dog{0, 0, 0, 1, 0};
    const ProjectionParams proj{Var::leaf(random_matrix(rng, 5, d)), Var::leaf(Tensor({d, 1}))};
    const auto a = coattention_block(feature_map(vs, 2, 2), feature_map(vq, 2, 2),
                                     project_embedding(cat, proj), params);
    const auto b = coattention_block(feature_map(vs, 2, 2), feature_map(vq, 2, 2),
                                     project_embedding(dog, proj), params);
    CHECK(max_abs_diff(a.query.values.value(), b.query.values.value()) > 0.0);
  }

  TEST_CASE("stacked co-attention gradients match finite differences") {
    // C=8, WH=16, d=6 with depth 2, through the full episode model.
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CAPTURE(seed);
      const auto r = gradcheck_model(seed);
      CHECK(r.checked > 0);
      CHECK(r.max_relative_error <= 1e-4);
    }
  }
}
