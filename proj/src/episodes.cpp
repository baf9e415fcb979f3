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

#include "coseg/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "coseg/error.hpp"
#include "coseg/io.hpp"
#include "coseg/mask.hpp"
#include "coseg/rng.hpp"

namespace coseg {

using nlohmann::json;

std::string_view to_string(FoldScheme scheme) {
  switch (scheme) {
    case FoldScheme::Pascal: return "pascal";
    case FoldScheme::Vos: return "vos";
    case FoldScheme::Synthetic: return "synthetic";
  }
  return "unknown";
}

FoldScheme parse_fold_scheme(std::string_view name) {
  if (name == "pascal") return FoldScheme::Pascal;
  if (name == "vos") return FoldScheme::Vos;
  if (name == "synthetic") return FoldScheme::Synthetic;
  throw ConfigError("unknown fold scheme '" + std::string(name) +
                    "' (expected pascal, vos or synthetic)");
}

std::vector<FoldSpec> make_folds(std::span<const std::string> classes, FoldScheme scheme) {
  std::size_t n_folds = 0;
  switch (scheme) {
    case FoldScheme::Pascal:
      if (classes.size() != 20) {
        throw ConfigError("pascal scheme expects exactly 20 classes, got " +
                          std::to_string(classes.size()));
      }
      n_folds = 4;
      break;
    case FoldScheme::Vos:
      if (classes.size() != 65) {
        throw ConfigError("vos scheme expects exactly 65 classes, got " +
                          std::to_string(classes.size()));
      }
      n_folds = 5;
      break;
    case FoldScheme::Synthetic:
      if (classes.empty() || classes.size() % 4 != 0) {
        throw ConfigError("synthetic scheme expects a positive multiple of 4 classes, got " +
                          std::to_string(classes.size()));
      }
      n_folds = 4;
      break;
  }
  const std::set<std::string> distinct(classes.begin(), classes.end());
  if (distinct.size() != classes.size()) throw ConfigError("class list contains duplicates");

  const std::size_t per_fold = classes.size() / n_folds;
  std::vector<FoldSpec> folds(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    folds[f].fold_id = f;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const bool test = i >= f * per_fold && i < (f + 1) * per_fold;
      (test ? folds[f].test_classes : folds[f].train_classes).push_back(classes[i]);
    }
  }
  return folds;
}

json folds_to_json(FoldScheme scheme, std::span<const std::string> classes,
                   std::span<const FoldSpec> folds) {
  json out{{"scheme", to_string(scheme)},
           {"class_order", std::vector<std::string>(classes.begin(), classes.end())},
           {"folds", json::array()}};
  for (const auto& f : folds) {
    out["folds"].push_back(json{{"fold_id", f.fold_id},
                                {"test_classes", f.test_classes},
                                {"train_classes", f.train_classes}});
  }
  return out;
}

std::vector<std::string> parse_class_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    out.emplace_back(line.substr(first, last - first + 1));
  }
  return out;
}

std::vector<std::string> read_class_list(const std::filesystem::path& path) {
  return parse_class_list(read_text(path));
}

DatasetIndex::DatasetIndex(std::filesystem::path root, std::vector<DatasetItem> items)
    : root_(std::move(root)), items_(std::move(items)) {
  build();
}

DatasetIndex& DatasetIndex::operator=(const DatasetIndex& other) {
  if (this != &other) {
    root_ = other.root_;
    items_ = other.items_;
    build();
  }
  return *this;
}

void DatasetIndex::build() {
  by_class_.clear();
  tracks_.clear();
  video_ = std::any_of(items_.begin(), items_.end(),
                       [](const DatasetItem& it) { return it.sequence.has_value(); });
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    if (video_ && (!it.sequence || !it.frame)) {
      throw ParseError("dataset mixes video records with static records (record " +
                       std::to_string(i + 1) + ")");
    }
    by_class_[it.class_label].push_back(i);
  }
  if (!video_) return;

  // (sequence, category) → frame-ordered records.
  std::map<std::pair<std::string, std::string>, std::vector<const DatasetItem*>> grouped;
  std::map<std::string, std::set<std::string>> present;
  for (const auto& it : items_) {
    grouped[{*it.sequence, it.class_label}].push_back(&it);
    present[*it.sequence].insert(it.class_label);
  }
  for (auto& [key, records] : grouped) {
    std::sort(records.begin(), records.end(),
              [](const DatasetItem* a, const DatasetItem* b) { return *a->frame < *b->frame; });
    VosSequence seq{key.first, key.second, {}, records, {}};
    for (const auto* r : records) {
      if (!seq.frames.empty() && seq.frames.back() == *r->frame) {
        throw ParseError("sequence '" + key.first + "' lists frame " +
                         std::to_string(*r->frame) + " twice for class '" + key.second + "'");
      }
      seq.frames.push_back(*r->frame);
    }
    const auto& cats = present[key.first];
    seq.categories_present.assign(cats.begin(), cats.end());
    tracks_[key.second].push_back(std::move(seq));
  }
}

std::filesystem::path DatasetIndex::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : root_ / p;
}

std::span<const std::size_t> DatasetIndex::items_of(std::string_view label) const {
  auto it = by_class_.find(label);
  if (it == by_class_.end()) return {};
  return it->second;
}

std::span<const VosSequence> DatasetIndex::sequences_of(std::string_view label) const {
  auto it = tracks_.find(label);
  if (it == tracks_.end()) return {};
  return it->second;
}

std::vector<std::string> DatasetIndex::classes() const {
  std::vector<std::string> out;
  for (const auto& [label, _] : by_class_) out.push_back(label);
  return out;
}

DatasetIndex parse_manifest(std::string_view text, std::filesystem::path root,
                            std::string_view origin) {
  std::vector<DatasetItem> items;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ParseError(where + ": record is not a JSON object");
    auto required = [&](const char* key) {
      if (!rec.contains(key) || !rec[key].is_string()) {
        throw ParseError(where + ": missing string field '" + key + "'");
      }
      return rec[key].get<std::string>();
    };
    DatasetItem item;
    item.class_label = required("class");
    item.input_path = required("image_or_feature_path");
    item.mask_path = required("mask_path");
    if (rec.contains("image_path")) {
      if (!rec["image_path"].is_string()) throw ParseError(where + ": image_path must be a string");
      item.image_path = rec["image_path"].get<std::string>();
    }
    if (rec.contains("sequence")) {
      if (!rec["sequence"].is_string()) throw ParseError(where + ": sequence must be a string");
      item.sequence = rec["sequence"].get<std::string>();
    }
    if (rec.contains("frame")) {
      if (!rec["frame"].is_number_unsigned() || rec["frame"].get<std::size_t>() == 0) {
        throw ParseError(where + ": frame must be a positive integer");
      }
      item.frame = rec["frame"].get<std::size_t>();
    }
    if (item.sequence.has_value() != item.frame.has_value()) {
      throw ParseError(where + ": sequence and frame must appear together");
    }
    items.push_back(std::move(item));
  }
  return DatasetIndex(std::move(root), std::move(items));
}

DatasetIndex load_manifest(const std::filesystem::path& path) {
  const auto root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_manifest(read_text(path), root, path.string());
}

std::string format_manifest_record(const DatasetItem& item) {
  json rec{{"class", item.class_label},
           {"image_or_feature_path", item.input_path},
           {"mask_path", item.mask_path}};
  if (item.image_path) rec["image_path"] = *item.image_path;
  if (item.sequence) rec["sequence"] = *item.sequence;
  if (item.frame) rec["frame"] = *item.frame;
  return rec.dump();
}

Episode sample_episode(const FoldSpec& fold, Split split, const DatasetIndex& index,
                       std::uint64_t seed, std::size_t shots) {
  if (shots == 0) throw ContractError("episodes need at least one support item");
  const auto& classes = split == Split::Test ? fold.test_classes : fold.train_classes;
  if (classes.empty()) throw SamplingError("fold has no classes in the requested split");

  Rng rng(seed);
  const std::string& label = classes[uniform_index(rng, classes.size())];
  Episode ep;
  ep.class_label = label;
  ep.fold_id = fold.fold_id;

  if (index.is_video()) {
    if (shots != 1) throw ContractError("video episodes use the first frame as the only support");
    std::vector<const VosSequence*> usable;
    for (const auto& s : index.sequences_of(label)) {
      if (s.frames.size() >= 2 && s.frames.front() == 1) usable.push_back(&s);
    }
    if (usable.empty()) {
      throw SamplingError("class '" + label +
                          "' has no sequence with a first frame and a later frame");
    }
    const VosSequence& seq = *usable[uniform_index(rng, usable.size())];
    const std::size_t q = 1 + uniform_index(rng, seq.frames.size() - 1);
    const DatasetItem& first = *seq.records.front();
    const DatasetItem& query = *seq.records[q];
    ep.support.push_back({first.input_path, first.image_path, label, seq.frames.front()});
    ep.query_path = query.input_path;
    ep.query_image_path = query.image_path;
    ep.gt_mask_path = query.mask_path;
    ep.sequence = seq.id;
    ep.query_frame = seq.frames[q];
    return ep;
  }

  const auto members = index.items_of(label);
  if (members.size() < shots + 1) {
    throw SamplingError("class '" + label + "' has " + std::to_string(members.size()) +
                        " usable items, episodes need " + std::to_string(shots + 1));
  }
  // Partial Fisher-Yates over the class members.
  std::vector<std::size_t> pick(members.begin(), members.end());
  for (std::size_t i = 0; i <= shots; ++i) {
    std::swap(pick[i], pick[i + uniform_index(rng, pick.size() - i)]);
  }
  for (std::size_t i = 0; i < shots; ++i) {
    const auto& it = index.items()[pick[i]];
    ep.support.push_back({it.input_path, it.image_path, label, std::nullopt});
  }
  const auto& q = index.items()[pick[shots]];
  ep.query_path = q.input_path;
  ep.query_image_path = q.image_path;
  ep.gt_mask_path = q.mask_path;
  return ep;
}

namespace {

std::vector<double> random_unit(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

void remove_component(std::vector<double>& v, const std::vector<double>& unit) {
  double dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * unit[i];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * unit[i];
}

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
}

struct Disk {
  double cy, cx, r;
  bool contains(std::size_t y, std::size_t x) const {
    const double dy = static_cast<double>(y) + 0.5 - cy;
    const double dx = static_cast<double>(x) + 0.5 - cx;
    return dy * dy + dx * dx <= r * r;
  }
};

Disk random_disk(std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double scale = s / 16.0;
  const double r = uniform(rng, 2.5 * scale, 4.0 * scale);
  return {uniform(rng, r, s - r), uniform(rng, r, s - r), r};
}

std::size_t partner_class(std::size_t k, std::size_t n) {
  const std::size_t p = k ^ 1u;
  return p < n ? p : k - 1;
}

std::string class_name(std::size_t k, std::size_t n) {
  const int width = n > 100 ? 3 : 2;
  char buf[32];
  std::snprintf(buf, sizeof buf, "class%0*zu", width, k);
  return buf;
}

void paint(Tensor& image, const Disk& disk, const std::vector<double>& signature,
           double amplitude, double noise, Rng& rng, BinaryMask* mask) {
  const std::size_t c = image.shape()[0], size = image.shape()[1];
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      if (!disk.contains(y, x)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        image[(ch * size + y) * size + x] =
            amplitude * signature[ch] + noise * standard_normal(rng);
      }
      if (mask) mask->set(y, x, true);
    }
}

Tensor average_pool(const Tensor& image, std::size_t stride) {
  const std::size_t c = image.shape()[0], size = image.shape()[1], out = size / stride;
  Tensor pooled({c, out, out});
  const double inv = 1.0 / static_cast<double>(stride * stride);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        pooled[(ch * out + y / stride) * out + x / stride] += image[(ch * size + y) * size + x] * inv;
      }
  return pooled;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticOptions& o,
                                            const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (o.n_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (o.items_per_class == 0) throw ConfigError("items_per_class must be positive");
  if (o.channels < 3) throw ConfigError("synthetic features need at least 3 channels");
  if (o.word_dim == 0) throw ConfigError("word_dim must be positive");
  if (o.feature_stride == 0 || o.image_size % o.feature_stride != 0 || o.image_size < 8) {
    throw ConfigError("image_size must be >= 8 and divisible by feature_stride");
  }

  Rng rng(derive_seed(o.seed, "synthetic"));
  const std::size_t c = o.channels, n = o.n_classes, size = o.image_size;

  // Background and a shared objectness direction, orthogonal to each other.
  const auto background = random_unit(c, rng);
  auto objectness = random_unit(c, rng);
  remove_component(objectness, background);
  normalize(objectness);
  const double own = std::sqrt(1.0 - o.objectness * o.objectness);
  std::vector<std::vector<double>> signatures(n);
  for (auto& s : signatures) {
    s = random_unit(c, rng);
    remove_component(s, background);
    remove_component(s, objectness);
    normalize(s);
    for (std::size_t i = 0; i < c; ++i) s[i] = o.objectness * objectness[i] + own * s[i];
  }

  // Word vectors are a fixed linear image of the visual signatures plus noise.
  Tensor mixing({o.word_dim, c});
  for (auto& v : mixing.data()) v = standard_normal(rng) / std::sqrt(double(c));
  SyntheticDataset ds;
  ds.embeddings = EmbeddingTable(o.word_dim);
  for (std::size_t k = 0; k < n; ++k) {
    ds.classes.push_back(class_name(k, n));
    std::vector<double> e(o.word_dim);
    for (std::size_t r = 0; r < o.word_dim; ++r) {
      for (std::size_t i = 0; i < c; ++i) e[r] += mixing(r, i) * signatures[k][i];
      e[r] += 0.05 * standard_normal(rng);
    }
    ds.embeddings.insert(ds.classes[k], std::move(e));
  }

  const fs::path target = fs::absolute(out_dir).lexically_normal();
  std::random_device rd;
  const fs::path staging =
      target.parent_path() / ("." + target.filename().string() + ".staging" + std::to_string(rd()));
  std::vector<DatasetItem> items;
  std::string manifest;
  try {
    fs::create_directories(staging / "features");
    fs::create_directories(staging / "images");
    fs::create_directories(staging / "masks");
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t item = 0; item < o.items_per_class; ++item) {
        Tensor image({c, size, size});
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < size * size; ++p)
            image[ch * size * size + p] = o.amplitude * background[ch] + o.noise * standard_normal(rng);

        Disk target_disk = random_disk(size, rng);
        if (o.two_object) {
          Disk other = random_disk(size, rng);
          while (std::hypot(target_disk.cy - other.cy, target_disk.cx - other.cx) <=
                 target_disk.r + other.r + 1.0) {
            target_disk = random_disk(size, rng);
            other = random_disk(size, rng);
          }
          paint(image, other, signatures[partner_class(k, n)], o.amplitude, o.noise, rng,
                nullptr);
        }
        BinaryMask mask(size, size);
        paint(image, target_disk, signatures[k], o.amplitude, o.noise, rng, &mask);

        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_%03zu", ds.classes[k].c_str(), item);
        DatasetItem rec{ds.classes[k], std::string("features/") + stem + ".ften",
                        std::string("images/") + stem + ".ften",
                        std::string("masks/") + stem + ".pgm", std::nullopt, std::nullopt};
        write_ften(staging / rec.input_path, average_pool(image, o.feature_stride));
        write_ften(staging / *rec.image_path, image);
        save_mask(staging / rec.mask_path, mask);
        manifest += format_manifest_record(rec) + "\n";
        items.push_back(std::move(rec));
      }
    }
    std::string class_text;
    for (const auto& label : ds.classes) class_text += label + "\n";
    write_text_atomic(staging / "classes.txt", class_text);
    write_text_atomic(staging / "embeddings.txt", format_embedding_table(ds.embeddings));
    write_text_atomic(staging / "manifest.jsonl", manifest);

    fs::create_directories(target);
    for (const auto& entry : fs::directory_iterator(staging)) {
      const fs::path dest = target / entry.path().filename();
      if (fs::exists(dest)) fs::remove_all(dest);
      fs::rename(entry.path(), dest);
    }
    fs::remove_all(staging);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw IoError(e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  ds.index = DatasetIndex(target, std::move(items));
  return ds;
}

}  // namespace coseg
