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

#include "coseg/error.hpp"
#include "coseg/tensor.hpp"
#include "support.hpp"

using namespace coseg;
using coseg::testing::fd_max_rel_error;
using coseg::testing::naive_matmul;
using coseg::testing::random_int_matrix;
using coseg::testing::random_matrix;

namespace {

constexpr int kSeeds = 20;

std::vector<Var> leaves_of(std::initializer_list<Tensor> values) {
  std::vector<Var> out;
  for (const auto& t : values) out.push_back(Var::leaf(t));
  return out;
}

// Projects an arbitrary tensor-valued result to a scalar with fixed random
// weights, so every output element contributes to the checked gradient.
Var weighted_sum(const Var& v, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(v.shape());
  for (auto& x : w.values()) x = standard_normal(rng);
  return sum(hadamard(v, Var::constant(w)));
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul examples") {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    CHECK(matmul(Var::constant(a), Var::constant(Tensor::identity(2))).value() == a);
    CHECK(matmul(Var::constant(a), Var::constant(Tensor({2, 2}))).value() == Tensor({2, 2}));
    CHECK(matmul(Var::constant(a), Var::constant(Tensor::matrix({{5, 6}, {7, 8}}))).value() ==
          Tensor::matrix({{19, 22}, {43, 50}}));
  }

  TEST_CASE("matmul shape mismatch names both shapes") {
    try {
      matmul(Var::constant(Tensor({2, 3})), Var::constant(Tensor({2, 3})));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }

  TEST_CASE("matmul equals the triple-loop oracle on integer matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t m = 1 + uniform_index(rng, 8), k = 1 + uniform_index(rng, 8),
                        n = 1 + uniform_index(rng, 8);
      const Tensor a = random_int_matrix(rng, m, k), b = random_int_matrix(rng, k, n);
      CHECK(matmul(Var::constant(a), Var::constant(b)).value() == naive_matmul(a, b));
    }
  }

  TEST_CASE("softmax examples") {
    const auto s = softmax_columns(Var::constant(Tensor::matrix({{0, 1, 1000}, {0, 2, 1001}})));
    CHECK(s.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.value()(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    const double lo = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
    CHECK(std::abs(s.value()(0, 1) - 0.268941) < 1e-6);
    CHECK(std::abs(s.value()(1, 1) - 0.731059) < 1e-6);
    CHECK(std::abs(s.value()(0, 1) - lo) < 1e-15);
    CHECK(std::abs(s.value()(0, 2) - 0.268941) < 1e-6);
    CHECK(std::abs(s.value()(1, 2) - 0.731059) < 1e-6);
    CHECK_THROWS_AS(softmax_columns(Var::constant(Tensor({0, 3}))), DimensionError);
  }

  TEST_CASE("softmax column sums, range and shift invariance") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t r = 1 + uniform_index(rng, 12), c = 1 + uniform_index(rng, 12);
      Tensor m = random_matrix(rng, r, c, 10.0);
      const Tensor s = softmax_columns(Var::constant(m)).value();
      for (std::size_t j = 0; j < c; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
          total += s(i, j);
          if (r > 1) {
            CHECK(s(i, j) > 0.0);
            CHECK(s(i, j) < 1.0);
          }
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
      }
      Tensor shifted = m;
      for (std::size_t j = 0; j < c; ++j) {
        const double shift = uniform(rng, -50.0, 50.0);
        for (std::size_t i = 0; i < r; ++i) shifted(i, j) += shift;
      }
      CHECK(coseg::testing::max_abs_diff(softmax_columns(Var::constant(shifted)).value(), s) <=
            1e-9);
    }
  }

  TEST_CASE("sigmoid examples") {
    const auto s = sigmoid(Var::constant(Tensor::matrix({{0, 100, 1, -100}}))).value();
    CHECK(s(0, 0) == 0.5);
    // 1 - sigmoid(100) is about 3.7e-44, below double spacing at 1.0; the
    // rounded value is therefore exactly 1.
    CHECK(s(0, 1) <= 1.0);
    CHECK(1.0 - s(0, 1) < 1e-40);
    CHECK(std::abs(s(0, 2) - 0.731059) < 1e-6);
    CHECK(s(0, 3) > 0.0);
    CHECK(std::isfinite(s(0, 3)));
  }

  TEST_CASE("hadamard examples") {
    const Tensor a = Tensor::matrix({{1, 2, 3}});
    CHECK(hadamard(Var::constant(a), Var::constant(Tensor({1, 3}, 1.0))).value() == a);
    CHECK(hadamard(Var::constant(a), Var::constant(Tensor({1, 3}))).value() == Tensor({1, 3}));
    CHECK(hadamard(Var::constant(a), Var::constant(Tensor::matrix({{2, 0.5, -1}}))).value() ==
          Tensor::matrix({{2, 1, -3}}));
    const Tensor tall = Tensor::matrix({{1, 2}, {3, 4}});
    CHECK(hadamard(Var::constant(tall), Var::constant(Tensor::matrix({{10, 100}}))).value() ==
          Tensor::matrix({{10, 200}, {30, 400}}));
    CHECK_THROWS_AS(hadamard(Var::constant(tall), Var::constant(Tensor({2, 3}))), DimensionError);
  }

  TEST_CASE("concat_rows examples") {
    const Tensor a = Tensor::matrix({{1, 2, 3}});
    const Tensor b = Tensor::matrix({{4, 5, 6}, {7, 8, 9}});
    const Tensor c = concat_rows(Var::constant(a), Var::constant(b)).value();
    CHECK(c.shape() == Shape{3, 3});
    CHECK(c(0, 0) == 1);
    CHECK(c(2, 2) == 9);
    CHECK(concat_rows(Var::constant(a), Var::constant(Tensor({0, 3}))).value() == a);
    CHECK_THROWS_AS(concat_rows(Var::constant(a), Var::constant(Tensor({1, 2}))), DimensionError);

    Var la = Var::leaf(a);
    backward(sum(concat_rows(la, Var::constant(b))));
    CHECK(*la.grad() == Tensor({1, 3}, 1.0));
  }

  TEST_CASE("backward examples") {
    Var w = Var::leaf(Tensor::matrix({{0.5, -1, 2}, {3, 0, 1}}));
    const Tensor x = Tensor::matrix({{2}, {-3}, {7}});
    backward(sum(matmul(w, Var::constant(x))));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK((*w.grad())(i, j) == x(j, 0));

    Var v = Var::leaf(Tensor::matrix({{1, 2}}));
    backward(sum(add(scale(v, 0.0), Var::constant(Tensor::matrix({{4, 5}})))));
    CHECK(*v.grad() == Tensor({1, 2}));

    CHECK_THROWS_AS(backward(matmul(w, Var::constant(x))), ContractError);
  }

  TEST_CASE("repeated backward accumulates until zero_grad") {
    Var w = Var::leaf(Tensor::matrix({{1, 2}}));
    auto loss = [&] { return sum(scale(w, 3.0)); };
    backward(loss());
    backward(loss());
    CHECK(*w.grad() == Tensor({1, 2}, 6.0));
    std::vector<Parameter> ps{{"w", w}};
    zero_grad(ps);
    backward(loss());
    CHECK(*w.grad() == Tensor({1, 2}, 3.0));
  }

  TEST_CASE("finite-difference agreement for every op over 20 seeds") {
    for (int seed = 0; seed < kSeeds; ++seed) {
      CAPTURE(seed);
      Rng rng(static_cast<std::uint64_t>(seed) + 100);
      const std::uint64_t ws = static_cast<std::uint64_t>(seed) + 7000;

      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(matmul(l[0], l[1]), ws); },
                             leaves_of({random_matrix(rng, 3, 4), random_matrix(rng, 4, 2)})) <=
            1e-4);
      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(transpose(l[0]), ws); },
                             leaves_of({random_matrix(rng, 3, 5)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(softmax_columns(l[0]), ws); },
                leaves_of({random_matrix(rng, 5, 3, 3.0)})) <= 1e-4);
      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(sigmoid(l[0]), ws); },
                             leaves_of({random_matrix(rng, 2, 6, 3.0)})) <= 1e-4);
      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(coseg::tanh(l[0]), ws); },
                             leaves_of({random_matrix(rng, 2, 6, 2.0)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(hadamard(l[0], l[1]), ws); },
                leaves_of({random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(hadamard(l[0], l[1]), ws); },
                leaves_of({random_matrix(rng, 3, 4), random_matrix(rng, 1, 4)})) <= 1e-4);
      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(add(l[0], l[1]), ws); },
                             leaves_of({random_matrix(rng, 2, 3), random_matrix(rng, 2, 3)})) <=
            1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(add_bias(l[0], l[1]), ws); },
                leaves_of({random_matrix(rng, 3, 4), random_matrix(rng, 3, 1)})) <= 1e-4);
      CHECK(fd_max_rel_error([&](const auto& l) { return weighted_sum(scale(l[0], -1.7), ws); },
                             leaves_of({random_matrix(rng, 2, 2)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(concat_rows(l[0], l[1]), ws); },
                leaves_of({random_matrix(rng, 2, 3), random_matrix(rng, 1, 3)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(tile_columns(l[0], 5), ws); },
                leaves_of({random_matrix(rng, 3, 1)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(reshape(l[0], {3, 4}), ws); },
                leaves_of({random_matrix(rng, 2, 6)})) <= 1e-4);
      CHECK(fd_max_rel_error(
                [&](const auto& l) {
                  std::vector<Var> items{l[0], l[1], l[2]};
                  return weighted_sum(mean(items), ws);
                },
                leaves_of({random_matrix(rng, 2, 2), random_matrix(rng, 2, 2),
                           random_matrix(rng, 2, 2)})) <= 1e-4);
      Tensor img({2, 4, 4});
      for (auto& v : img.values()) v = standard_normal(rng);
      CHECK(fd_max_rel_error(
                [&](const auto& l) { return weighted_sum(space_to_depth2(l[0]), ws); },
                leaves_of({img})) <= 1e-4);
    }
  }

  TEST_CASE("space_to_depth2 layout") {
    Tensor img({1, 2, 4});
    for (std::size_t i = 0; i < 8; ++i) img[i] = static_cast<double>(i);
    const Tensor out = space_to_depth2(Var::constant(img)).value();
    CHECK(out.shape() == Shape{4, 2});
    // Column 0 holds the left 2×2 patch: rows dy·2 + dx.
    CHECK(out(0, 0) == 0);
    CHECK(out(1, 0) == 1);
    CHECK(out(2, 0) == 4);
    CHECK(out(3, 0) == 5);
    CHECK(out(0, 1) == 2);
    CHECK(out(3, 1) == 7);
    CHECK_THROWS_AS(space_to_depth2(Var::constant(Tensor({1, 3, 4}))), DimensionError);
  }

  TEST_CASE("ops stay finite for inputs bounded by 1e3") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor m = random_matrix(rng, 4, 4, 1e3);
      for (auto& v : m.values()) v = std::clamp(v, -1e3, 1e3);
      const Var x = Var::constant(m);
      CHECK(softmax_columns(x).value().all_finite());
      CHECK(sigmoid(x).value().all_finite());
      CHECK(coseg::tanh(x).value().all_finite());
      CHECK(matmul(x, x).value().all_finite());
      CHECK(hadamard(x, x).value().all_finite());
    }
  }

  TEST_CASE("tensor construction contracts") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    CHECK(Tensor::scalar(4.0).size() == 1);
    CHECK(Tensor::matrix({{1, 2}, {3, 4}}).transposed() == Tensor::matrix({{1, 3}, {2, 4}}));
  }
}
