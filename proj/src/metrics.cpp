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

#include "coseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "coseg/error.hpp"

namespace coseg {

PixelCounts& PixelCounts::operator+=(const PixelCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

PixelCounts count_pixels(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw DimensionError("mask shapes differ: " + std::to_string(pred.height()) + "x" +
                         std::to_string(pred.width()) + " vs " + std::to_string(gt.height()) +
                         "x" + std::to_string(gt.width()));
  }
  PixelCounts c;
  const auto p = pred.bits(), g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) ++c.tp;
    else if (p[i]) ++c.fp;
    else if (g[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<double> iou(const BinaryMask& pred, const BinaryMask& gt) {
  const PixelCounts c = count_pixels(pred, gt);
  if (c.fg_union() == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.fg_union());
}

std::map<std::string, double> per_class_iou(std::span<const EpisodeResult> results,
                                            std::span<const std::string> fold_classes,
                                            ClassAggregation mode) {
  const std::set<std::string, std::less<>> allowed(fold_classes.begin(), fold_classes.end());
  std::map<std::string, PixelCounts> pooled;
  std::map<std::string, std::pair<double, std::size_t>> episode_sums;
  for (const auto& r : results) {
    if (!allowed.contains(r.class_label)) {
      throw ContractError("result for class '" + r.class_label +
                          "' is not among the fold's classes");
    }
    pooled[r.class_label] += r.counts;
    if (r.counts.fg_union() > 0) {
      auto& [total, n] = episode_sums[r.class_label];
      total += static_cast<double>(r.counts.tp) / static_cast<double>(r.counts.fg_union());
      ++n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& label : fold_classes) {
    if (mode == ClassAggregation::Dataset) {
      auto it = pooled.find(label);
      if (it == pooled.end() || it->second.fg_union() == 0) continue;
      out[label] = static_cast<double>(it->second.tp) /
                   static_cast<double>(it->second.fg_union());
    } else {
      auto it = episode_sums.find(label);
      if (it == episode_sums.end()) continue;
      out[label] = it->second.first / static_cast<double>(it->second.second);
    }
  }
  return out;
}

double mean_iou(std::span<const EpisodeResult> results,
                std::span<const std::string> fold_classes, ClassAggregation mode) {
  if (results.empty()) throw ContractError("mean_iou: no episode results");
  const auto per_class = per_class_iou(results, fold_classes, mode);
  if (per_class.empty()) throw ContractError("mean_iou: every class has an empty union");
  double total = 0.0;
  for (const auto& [_, v] : per_class) total += v;
  return total / static_cast<double>(per_class.size());
}

double binary_iou(std::span<const EpisodeResult> results) {
  if (results.empty()) throw ContractError("binary_iou: no episode results");
  PixelCounts c;
  for (const auto& r : results) c += r.counts;
  // An empty pooled union leaves that side undefined; it is dropped from the mean.
  double total = 0.0;
  int defined = 0;
  if (c.fg_union() > 0) {
    total += static_cast<double>(c.tp) / static_cast<double>(c.fg_union());
    ++defined;
  }
  if (c.bg_union() > 0) {
    total += static_cast<double>(c.tn) / static_cast<double>(c.bg_union());
    ++defined;
  }
  return total / defined;
}

MetricReport make_report(std::span<const EpisodeResult> results,
                         std::span<const std::string> fold_classes, std::string scheme,
                         std::size_t fold_id, std::uint64_t run_seed, ClassAggregation mode) {
  MetricReport r;
  r.scheme = std::move(scheme);
  r.fold_id = fold_id;
  r.run_seed = run_seed;
  r.per_class_iou = per_class_iou(results, fold_classes, mode);
  r.mean_iou = mean_iou(results, fold_classes, mode);
  r.binary_iou = binary_iou(results);
  r.n_episodes = results.size();
  return r;
}

RunStatistic mean_and_stddev(std::span<const double> values) {
  if (values.empty()) throw ContractError("no values to aggregate");
  // Working with offsets from the first value keeps identical runs exact.
  const double origin = values.front();
  double shift = 0.0;
  for (double v : values) shift += v - origin;
  shift /= static_cast<double>(values.size());
  RunStatistic s;
  s.mean = origin + shift;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - origin - shift) * (v - origin - shift);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

RunSummary aggregate_runs(std::span<const MetricReport> reports, std::size_t expected) {
  if (reports.empty()) throw ContractError("aggregate_runs: no reports");
  for (const auto& r : reports) {
    if (r.scheme != reports.front().scheme || r.fold_id != reports.front().fold_id) {
      throw ContractError("aggregate_runs: reports come from different folds or schemes");
    }
  }
  std::vector<double> m, b;
  for (const auto& r : reports) {
    m.push_back(r.mean_iou);
    b.push_back(r.binary_iou);
  }
  RunSummary s;
  s.runs = reports.size();
  s.expected_runs = expected;
  s.mean_iou = mean_and_stddev(m);
  s.binary_iou = mean_and_stddev(b);
  if (reports.size() != expected) {
    s.warning = "aggregated " + std::to_string(reports.size()) + " runs, expected " +
                std::to_string(expected);
  }
  return s;
}

nlohmann::json to_json(const MetricReport& report) {
  return nlohmann::json{{"scheme", report.scheme},
                        {"fold_id", report.fold_id},
                        {"run_seed", report.run_seed},
                        {"per_class_iou", report.per_class_iou},
                        {"mean_iou", report.mean_iou},
                        {"binary_iou", report.binary_iou},
                        {"n_episodes", report.n_episodes}};
}

nlohmann::json to_json(const RunSummary& summary) {
  nlohmann::json j{
      {"runs", summary.runs},
      {"mean_iou", {{"mean", summary.mean_iou.mean}, {"stddev", summary.mean_iou.stddev}}},
      {"binary_iou",
       {{"mean", summary.binary_iou.mean}, {"stddev", summary.binary_iou.stddev}}}};
  if (summary.warning) j["warning"] = *summary.warning;
  return j;
}

}  // namespace coseg
