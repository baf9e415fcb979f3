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

#include "coseg/render.hpp"

#include <algorithm>
#include <cmath>

#include "coseg/error.hpp"

namespace coseg {

namespace {

constexpr std::uint8_t kSeparator = 128;

std::vector<double> energy(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) {
    throw DimensionError("render: expected c×h×w, got " + shape_string(image.shape()));
  }
  const std::size_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  std::vector<double> out(height * width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sy = y * h / height, sx = x * w / width;
      double e = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = image[(ch * h + sy) * w + sx];
        e += v * v;
      }
      out[y * width + x] = std::sqrt(e);
    }
  const double peak = *std::max_element(out.begin(), out.end());
  for (auto& v : out) v = peak > 0.0 ? 200.0 * v / peak : 0.0;
  return out;
}

}  // namespace

Raster render_episode(const Tensor& support, const Tensor& query, const BinaryMask& prediction) {
  const std::size_t h = prediction.height(), w = prediction.width();
  const auto s = energy(support, h, w);
  const auto q = energy(query, h, w);
  Raster r{h, 3 * w + 2, {}};
  r.pixels.assign(r.height * r.width, kSeparator);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      auto* row = r.pixels.data() + y * r.width;
      row[x] = static_cast<std::uint8_t>(s[i]);
      row[w + 1 + x] = static_cast<std::uint8_t>(q[i]);
      row[2 * w + 2 + x] = prediction(y, x) ? 255 : static_cast<std::uint8_t>(q[i] / 3.0);
    }
  return r;
}

}  // namespace coseg
