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

#include "coseg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "coseg/error.hpp"

namespace coseg {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'E', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

[[noreturn]] void fail(std::string_view origin, std::size_t offset, const std::string& what) {
  throw ParseError(std::string(origin) + ": " + what + " at byte offset " +
                   std::to_string(offset));
}

}  // namespace

std::vector<std::uint8_t> encode_ften(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_ften(std::span<const std::uint8_t> bytes, std::string_view origin) {
  if (bytes.size() < 8) fail(origin, bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(origin, 0, "bad magic (expected FTEN)");
  const std::uint32_t rank = get_u32(bytes.data() + 4);
  std::size_t offset = 8;
  if (bytes.size() < offset + 4ull * rank) fail(origin, bytes.size(), "truncated extents");
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i, offset += 4) {
    shape[i] = get_u32(bytes.data() + offset);
    if (shape[i] == 0) fail(origin, offset, "zero extent");
  }
  const std::size_t n = shape_size(shape);
  if (bytes.size() != offset + 4 * n) {
    fail(origin, bytes.size(),
         "payload holds " + std::to_string((bytes.size() - offset) / 4) + " floats, header " +
             shape_string(shape) + " needs " + std::to_string(n));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i, offset += 4) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset));
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor read_ften(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode_ften(bytes, path.string());
}

void write_ften(const std::filesystem::path& path, const Tensor& t) {
  write_file_atomic(path, encode_ften(t));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());

  std::random_device rd;
  const fs::path tmp =
      parent / ("." + path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                  ec.message());
  }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

}  // namespace coseg
