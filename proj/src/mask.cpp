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

#include "coseg/mask.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "coseg/error.hpp"
#include "coseg/io.hpp"

namespace coseg {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (bits_.size() != height * width) {
    throw DimensionError("mask " + std::to_string(height) + "x" + std::to_string(width) +
                         " needs " + std::to_string(height * width) + " values, got " +
                         std::to_string(bits_.size()));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::string_view origin)
      : bytes_(bytes), origin_(origin) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(std::string(origin_) + ": " + what + " at byte offset " +
                     std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected a number");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1u << 24)) fail("header value too large");
    }
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string_view origin_;
  std::size_t pos_ = 0;
};

}  // namespace

BinaryMask decode_pgm_mask(std::span<const std::uint8_t> bytes, std::string_view origin) {
  HeaderReader r(bytes, origin);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') r.fail("bad magic (expected P5)");
  r.pos() = 2;
  const std::size_t width = r.number();
  const std::size_t height = r.number();
  const std::size_t maxval = r.number();
  if (width == 0 || height == 0) r.fail("zero image extent");
  if (maxval == 0) r.fail("zero maxval");
  if (maxval > 255) {
    throw DataError(std::string(origin) + ": 16-bit PGM (maxval " + std::to_string(maxval) +
                    ") is not a supported mask encoding");
  }
  if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()])) {
    r.fail("expected whitespace after maxval");
  }
  ++r.pos();
  const std::size_t start = r.pos();
  if (bytes.size() - start < width * height) {
    r.pos() = bytes.size();
    r.fail("raster truncated: need " + std::to_string(width * height) + " bytes");
  }
  std::vector<std::uint8_t> bits(width * height);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const std::uint8_t v = bytes[start + i];
    if (v > maxval) {
      throw DataError(std::string(origin) + ": sample " + std::to_string(v) +
                      " exceeds maxval " + std::to_string(maxval) + " at byte offset " +
                      std::to_string(start + i));
    }
    bits[i] = v ? 1 : 0;
  }
  return BinaryMask(height, width, std::move(bits));
}

BinaryMask load_mask(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode_pgm_mask(bytes, path.string());
}

std::vector<std::uint8_t> encode_pgm(std::size_t height, std::size_t width,
                                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != height * width) throw DimensionError("encode_pgm: raster size mismatch");
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

void save_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> px(mask.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.at(i) ? 255 : 0;
  write_file_atomic(path, encode_pgm(mask.height(), mask.width(), px));
}

}  // namespace coseg
