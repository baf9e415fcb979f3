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
#include <string>
#include <vector>

#include "coseg/embeddings.hpp"
#include "coseg/episodes.hpp"
#include "coseg/metrics.hpp"
#include "coseg/segmodel.hpp"

#include <json.hpp>

namespace coseg {

// Memoizes tensors and masks read through a dataset index.
class DataCache {
 public:
  explicit DataCache(const DatasetIndex& index) : index_(&index) {}

  const Tensor& tensor(const std::string& relative);
  const BinaryMask& mask(const std::string& relative);

 private:
  const DatasetIndex* index_;
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, BinaryMask> masks_;
};

// The toy backend reads raw images (image_path when the record has one).
EpisodeTensors load_episode(const Episode& ep, const ModelConfig& cfg, DataCache& cache);

// Train-split episodes of `fold`; iteration i is sampled from a seed derived
// from (cfg.seed, "sampler", i).
EpisodeSource training_source(const FoldSpec& fold, const DatasetIndex& index,
                              const ModelConfig& cfg, DataCache& cache);

TrainResult train_on_fold(SegModel& model, const FoldSpec& fold, const DatasetIndex& index,
                          const EmbeddingTable& table, DataCache& cache);

struct EvalOptions {
  std::string scheme = "synthetic";
  std::size_t episodes = 200;
  std::uint64_t seed = 0;
  std::size_t shots = 1;
  ClassAggregation aggregation = ClassAggregation::Dataset;
};

// Test-split episodes only; nothing here can feed back into training.
MetricReport evaluate_fold(const SegModel& model, const FoldSpec& fold,
                           const DatasetIndex& index, const EmbeddingTable& table,
                           DataCache& cache, const EvalOptions& options);

struct MultiRunReport {
  std::vector<MetricReport> runs;
  RunSummary summary;
};

// Run r draws its episodes from derive_seed(options.seed, "run<r>").
MultiRunReport evaluate_runs(const SegModel& model, const FoldSpec& fold,
                             const DatasetIndex& index, const EmbeddingTable& table,
                             DataCache& cache, const EvalOptions& options, std::size_t runs);

nlohmann::json to_json(const MultiRunReport& report, const std::string& scheme,
                       std::size_t fold_id);

}  // namespace coseg
