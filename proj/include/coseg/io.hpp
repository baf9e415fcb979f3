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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coseg/tensor.hpp"

namespace coseg {

// FTEN: "FTEN", u32 rank, rank × u32 extents, then float32 values; all little-endian.
std::vector<std::uint8_t> encode_ften(const Tensor& t);
Tensor decode_ften(std::span<const std::uint8_t> bytes, std::string_view origin = "<memory>");

Tensor read_ften(const std::filesystem::path& path);
void write_ften(const std::filesystem::path& path, const Tensor& t);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `path`, so readers never see a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace coseg
