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
#include <random>
#include <string_view>

namespace coseg {

using Rng = std::mt19937_64;

// Independent named sub-stream of a user seed ("init", "sampler", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// Uniform in [0, n). Rejection sampling so results do not depend on the
// standard library's distribution implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);

}  // namespace coseg
