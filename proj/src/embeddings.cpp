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

#include "coseg/embeddings.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "coseg/error.hpp"
#include "coseg/io.hpp"

namespace coseg {

bool EmbeddingTable::contains(std::string_view label) const {
  return vectors_.find(label) != vectors_.end();
}

std::span<const double> EmbeddingTable::lookup(std::string_view label) const {
  auto it = vectors_.find(label);
  if (it == vectors_.end()) {
    throw LookupError("no embedding for class label '" + std::string(label) + "'");
  }
  return it->second;
}

void EmbeddingTable::insert(std::string label, std::vector<double> values) {
  if (dim_ == 0) dim_ = values.size();
  if (values.size() != dim_) {
    throw DimensionError("embedding for '" + label + "' has " + std::to_string(values.size()) +
                         " components, table dimension is " + std::to_string(dim_));
  }
  vectors_.insert_or_assign(std::move(label), std::move(values));
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

EmbeddingTable parse_embedding_table(std::string_view text, std::string_view origin) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    const auto where = std::string(origin) + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw ParseError(where + ": record has a label but no values");

    std::vector<double> values(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto f = fields[i];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[i - 1]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(values[i - 1])) {
        throw ParseError(where + ": bad component '" + std::string(f) + "'");
      }
    }
    if (table.dim() != 0 && values.size() != table.dim()) {
      throw ParseError(where + ": " + std::to_string(values.size()) +
                       " components, expected " + std::to_string(table.dim()));
    }
    const std::string label(fields[0]);
    if (table.contains(label)) throw ParseError(where + ": duplicate label '" + label + "'");
    table.insert(label, std::move(values));
  }
  return table;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  return parse_embedding_table(read_text(path), path.string());
}

std::string format_embedding_table(const EmbeddingTable& table) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (const auto& [label, values] : table.entries()) {
    os << label;
    for (double v : values) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace coseg
