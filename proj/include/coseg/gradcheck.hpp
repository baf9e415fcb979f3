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

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "coseg/tensor.hpp"

namespace coseg {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
// Denominator floor, so gradients near zero are compared absolutely.
inline constexpr double kGradCheckFloor = 1e-6;

double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;

  bool passed(double tolerance = kGradCheckTolerance) const {
    return max_relative_error <= tolerance;
  }
};

// Compares backward() against central differences of `loss` for every element
// of every parameter. `loss` must rebuild its graph from the current leaf values.
GradCheckResult check_gradients(const std::function<Var()>& loss, std::span<Parameter> params,
                                double step = kGradCheckStep);

struct GradCheckDims {
  std::size_t channels = 8;
  std::size_t locations = 16;  // W·H of the query feature map; must be a square
  std::size_t embed_dim = 6;
};

// Full episode model: toy encoder, depth-2 stacked co-attention, decoder, BCE.
GradCheckResult gradcheck_model(std::uint64_t seed, const GradCheckDims& dims = {});

}  // namespace coseg
