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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coseg/embeddings.hpp"

#include <json.hpp>

namespace coseg {

// pascal: 20 classes in 4 folds of 5. vos: 65 classes in 5 folds of 13.
// synthetic: any multiple of 4 classes in 4 folds (desk-scale benchmark).
enum class FoldScheme { Pascal, Vos, Synthetic };

std::string_view to_string(FoldScheme scheme);
FoldScheme parse_fold_scheme(std::string_view name);

struct FoldSpec {
  std::size_t fold_id = 0;
  std::vector<std::string> test_classes;   // novel classes, L_test
  std::vector<std::string> train_classes;  // remaining classes, input order kept
};

// Fold i tests the i-th contiguous block of the caller's class ordering.
std::vector<FoldSpec> make_folds(std::span<const std::string> classes, FoldScheme scheme);
nlohmann::json folds_to_json(FoldScheme scheme, std::span<const std::string> classes,
                             std::span<const FoldSpec> folds);

// One label per line; blank lines and surrounding whitespace are ignored.
std::vector<std::string> parse_class_list(std::string_view text);
std::vector<std::string> read_class_list(const std::filesystem::path& path);

// One manifest record. Paths are relative to the manifest's directory.
struct DatasetItem {
  std::string class_label;
  std::string input_path;                 // encoder input (features or image)
  std::optional<std::string> image_path;  // raw image for the toy encoder, if any
  std::string mask_path;
  std::optional<std::string> sequence;  // video datasets only
  std::optional<std::size_t> frame;     // 1-based frame index within the sequence
};

// One category's track through a video: frames in increasing order.
struct VosSequence {
  std::string id;
  std::string category;
  std::vector<std::size_t> frames;
  std::vector<const DatasetItem*> records;  // parallel to frames
  std::vector<std::string> categories_present;
};

class DatasetIndex {
 public:
  DatasetIndex() = default;
  DatasetIndex(std::filesystem::path root, std::vector<DatasetItem> items);
  DatasetIndex(const DatasetIndex& other) : DatasetIndex(other.root_, other.items_) {}
  DatasetIndex& operator=(const DatasetIndex& other);
  DatasetIndex(DatasetIndex&&) = default;
  DatasetIndex& operator=(DatasetIndex&&) = default;

  const std::filesystem::path& root() const { return root_; }
  const std::vector<DatasetItem>& items() const { return items_; }
  bool empty() const { return items_.empty(); }
  bool is_video() const { return video_; }

  std::filesystem::path resolve(const std::string& relative) const;
  std::span<const std::size_t> items_of(std::string_view label) const;
  // Tracks whose category is `label`, in sequence-id order.
  std::span<const VosSequence> sequences_of(std::string_view label) const;
  std::vector<std::string> classes() const;

 private:
  void build();

  std::filesystem::path root_;
  std::vector<DatasetItem> items_;
  bool video_ = false;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_class_;
  std::map<std::string, std::vector<VosSequence>, std::less<>> tracks_;
};

// JSON-lines: {"class", "image_or_feature_path", "mask_path", "image_path"?,
// "sequence"?, "frame"?}. An empty file is a valid empty index.
DatasetIndex parse_manifest(std::string_view text, std::filesystem::path root,
                            std::string_view origin = "<memory>");
DatasetIndex load_manifest(const std::filesystem::path& path);
std::string format_manifest_record(const DatasetItem& item);

enum class Split { Train, Test };

struct SupportEntry {
  std::string input_path;
  std::optional<std::string> image_path;
  std::string label;
  std::optional<std::size_t> frame;
};

// 1-way episode. Every support label equals class_label.
struct Episode {
  std::vector<SupportEntry> support;
  std::string query_path;
  std::optional<std::string> query_image_path;
  std::string gt_mask_path;
  std::string class_label;
  std::size_t fold_id = 0;
  std::optional<std::string> sequence;
  std::optional<std::size_t> query_frame;
};

// Static datasets: `shots` support items and a distinct query of one class.
// Video datasets: support is frame 1 of a track, query a uniform later frame.
Episode sample_episode(const FoldSpec& fold, Split split, const DatasetIndex& index,
                       std::uint64_t seed, std::size_t shots = 1);

struct SyntheticOptions {
  std::size_t n_classes = 8;
  std::size_t items_per_class = 20;
  std::size_t image_size = 16;
  bool two_object = false;
  std::uint64_t seed = 0;
  std::size_t channels = 8;    // feature channels
  std::size_t word_dim = 300;  // embedding table dimension
  std::size_t feature_stride = 2;
  double amplitude = 3.0;   // signature scale
  double noise = 0.5;       // per-pixel Gaussian noise
  double objectness = 0.6;  // weight of the direction shared by all objects
};

struct SyntheticDataset {
  std::vector<std::string> classes;
  EmbeddingTable embeddings;
  DatasetIndex index;
};

// Writes classes.txt, embeddings.txt, manifest.jsonl, features/, images/ and
// masks/ under `out_dir`. In two-object mode every item of class k also holds a
// blob of its partner class (k xor 1), absent from the ground truth.
SyntheticDataset generate_synthetic_dataset(const SyntheticOptions& options,
                                            const std::filesystem::path& out_dir);

}  // namespace coseg
