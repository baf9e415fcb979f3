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
#include <vector>

#include "coseg/mask.hpp"
#include "coseg/tensor.hpp"

namespace coseg {

struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

// Side-by-side panels: support image | query image | query with the predicted
// foreground drawn at full intensity. Images are c×h×w tensors shown as
// per-pixel channel energy, resized (nearest) to the prediction's size.
Raster render_episode(const Tensor& support, const Tensor& query, const BinaryMask& prediction);

}  // namespace coseg
