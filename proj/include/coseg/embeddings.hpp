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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coseg {

// Word vectors keyed by case-sensitive class label.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(std::string_view label) const;

  // Throws LookupError for unknown labels; there is no zero-vector fallback.
  std::span<const double> lookup(std::string_view label) const;
  void insert(std::string label, std::vector<double> values);

  const std::map<std::string, std::vector<double>, std::less<>>& entries() const {
    return vectors_;
  }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>, std::less<>> vectors_;
};

// One record per line: `<label> <v1> ... <vE>`. E is taken from the first record.
EmbeddingTable parse_embedding_table(std::string_view text, std::string_view origin = "<memory>");
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
std::string format_embedding_table(const EmbeddingTable& table);

}  // namespace coseg
