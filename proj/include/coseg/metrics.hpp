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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coseg/mask.hpp"

#include <json.hpp>

namespace coseg {

struct PixelCounts {
  std::uint64_t tp = 0;  // pred ∧ gt
  std::uint64_t fp = 0;  // pred ∧ ¬gt
  std::uint64_t fn = 0;  // ¬pred ∧ gt
  std::uint64_t tn = 0;  // ¬pred ∧ ¬gt

  std::uint64_t fg_union() const { return tp + fp + fn; }
  std::uint64_t bg_union() const { return tn + fp + fn; }
  PixelCounts& operator+=(const PixelCounts& o);
};

PixelCounts count_pixels(const BinaryMask& pred, const BinaryMask& gt);

// |pred ∧ gt| / |pred ∨ gt|; nullopt when the union is empty.
std::optional<double> iou(const BinaryMask& pred, const BinaryMask& gt);

struct EpisodeResult {
  std::string class_label;
  PixelCounts counts;
};

enum class ClassAggregation {
  Dataset,     // sum intersections and unions over a class's episodes, then divide
  PerEpisode,  // average the episodes' IoUs (sensitivity analysis only)
};

// Classes with an empty union over all their episodes are omitted.
std::map<std::string, double> per_class_iou(std::span<const EpisodeResult> results,
                                            std::span<const std::string> fold_classes,
                                            ClassAggregation mode = ClassAggregation::Dataset);

// Mean over fold classes of per-class foreground IoU; background is not a class.
double mean_iou(std::span<const EpisodeResult> results,
                std::span<const std::string> fold_classes,
                ClassAggregation mode = ClassAggregation::Dataset);

// Class-agnostic: mean of pooled foreground IoU and pooled background IoU.
double binary_iou(std::span<const EpisodeResult> results);

struct MetricReport {
  std::string scheme;
  std::size_t fold_id = 0;
  std::uint64_t run_seed = 0;
  std::map<std::string, double> per_class_iou;
  double mean_iou = 0.0;
  double binary_iou = 0.0;
  std::size_t n_episodes = 0;
};

MetricReport make_report(std::span<const EpisodeResult> results,
                         std::span<const std::string> fold_classes, std::string scheme,
                         std::size_t fold_id, std::uint64_t run_seed,
                         ClassAggregation mode = ClassAggregation::Dataset);

struct RunStatistic {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1); 0 for a single run
};

struct RunSummary {
  std::size_t runs = 0;
  std::size_t expected_runs = 0;
  RunStatistic mean_iou;
  RunStatistic binary_iou;
  std::optional<std::string> warning;
};

RunStatistic mean_and_stddev(std::span<const double> values);
RunSummary aggregate_runs(std::span<const MetricReport> reports, std::size_t expected = 5);

nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const RunSummary& summary);

}  // namespace coseg
