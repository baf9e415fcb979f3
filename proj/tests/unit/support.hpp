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

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "coseg/rng.hpp"
#include "coseg/tensor.hpp"

namespace coseg::testing {

inline Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = scale * standard_normal(rng);
  return t;
}

inline Tensor random_int_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = static_cast<double>(uniform_index(rng, 19)) - 9.0;
  return t;
}

// Textbook triple loop, written without the library's kernels.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.values()[i * k + p] * b.values()[p * n + j];
      c.values()[i * n + j] = s;
    }
  return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Central differences of a scalar function of the leaves' values, compared with
// backward(). Returns the worst relative error with an absolute floor of 1e-6.
inline double fd_max_rel_error(const std::function<Var(const std::vector<Var>&)>& f,
                               std::vector<Var> leaves, double h = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  backward(f(leaves));
  double worst = 0.0;
  for (auto& l : leaves) {
    const Tensor analytic = *l.grad();
    Tensor& x = l.mutable_leaf_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      x[i] = keep + h;
      const double up = f(leaves).value()[0];
      x[i] = keep - h;
      const double down = f(leaves).value()[0];
      x[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("coseg_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace coseg::testing
