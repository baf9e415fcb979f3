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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace coseg {

// Row-major binary grid; values are 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(std::size_t y, std::size_t x) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool on) { bits_[y * width_ + x] = on ? 1 : 0; }
  bool at(std::size_t i) const { return bits_[i] != 0; }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t count() const;
  BinaryMask complement() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// 8-bit binary PGM (P5). 0 is background, any nonzero sample is foreground.
BinaryMask decode_pgm_mask(std::span<const std::uint8_t> bytes,
                           std::string_view origin = "<memory>");
BinaryMask load_mask(const std::filesystem::path& path);

// Grayscale raster, one byte per pixel.
std::vector<std::uint8_t> encode_pgm(std::size_t height, std::size_t width,
                                     std::span<const std::uint8_t> pixels);
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace coseg
