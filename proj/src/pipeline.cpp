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

#include "coseg/pipeline.hpp"

#include "coseg/error.hpp"
#include "coseg/io.hpp"
#include "coseg/rng.hpp"

namespace coseg {

const Tensor& DataCache::tensor(const std::string& relative) {
  auto it = tensors_.find(relative);
  if (it == tensors_.end()) {
    it = tensors_.emplace(relative, read_ften(index_->resolve(relative))).first;
  }
  return it->second;
}

const BinaryMask& DataCache::mask(const std::string& relative) {
  auto it = masks_.find(relative);
  if (it == masks_.end()) {
    it = masks_.emplace(relative, load_mask(index_->resolve(relative))).first;
  }
  return it->second;
}

EpisodeTensors load_episode(const Episode& ep, const ModelConfig& cfg, DataCache& cache) {
  const bool toy = cfg.encoder == EncoderBackend::Toy;
  auto input = [&](const std::string& path, const std::optional<std::string>& image) {
    return cache.tensor(toy && image ? *image : path);
  };
  EpisodeTensors out;
  for (const auto& s : ep.support) out.support.push_back(input(s.input_path, s.image_path));
  out.query = input(ep.query_path, ep.query_image_path);
  out.label = ep.class_label;
  out.gt = cache.mask(ep.gt_mask_path);
  return out;
}

EpisodeSource training_source(const FoldSpec& fold, const DatasetIndex& index,
                              const ModelConfig& cfg, DataCache& cache) {
  const std::uint64_t base = derive_seed(cfg.seed, "sampler");
  return [&fold, &index, &cache, cfg, base](std::size_t it) {
    const auto ep = sample_episode(fold, Split::Train, index,
                                   derive_seed(base, "episode" + std::to_string(it)));
    return load_episode(ep, cfg, cache);
  };
}

TrainResult train_on_fold(SegModel& model, const FoldSpec& fold, const DatasetIndex& index,
                          const EmbeddingTable& table, DataCache& cache) {
  return train(model, training_source(fold, index, model.config(), cache), table);
}

MetricReport evaluate_fold(const SegModel& model, const FoldSpec& fold,
                           const DatasetIndex& index, const EmbeddingTable& table,
                           DataCache& cache, const EvalOptions& options) {
  if (options.episodes == 0) throw ContractError("evaluation needs at least one episode");
  std::vector<EpisodeResult> results;
  results.reserve(options.episodes);
  for (std::size_t i = 0; i < options.episodes; ++i) {
    const auto ep = sample_episode(fold, Split::Test, index,
                                   derive_seed(options.seed, "episode" + std::to_string(i)),
                                   options.shots);
    const auto tensors = load_episode(ep, model.config(), cache);
    const auto pred = model.predict(tensors, table);
    results.push_back({ep.class_label, count_pixels(pred.binarized, tensors.gt)});
  }
  return make_report(results, fold.test_classes, options.scheme, fold.fold_id, options.seed,
                     options.aggregation);
}

MultiRunReport evaluate_runs(const SegModel& model, const FoldSpec& fold,
                             const DatasetIndex& index, const EmbeddingTable& table,
                             DataCache& cache, const EvalOptions& options, std::size_t runs) {
  if (runs == 0) throw ContractError("evaluation needs at least one run");
  MultiRunReport out;
  for (std::size_t r = 0; r < runs; ++r) {
    EvalOptions run = options;
    run.seed = derive_seed(options.seed, "run" + std::to_string(r));
    out.runs.push_back(evaluate_fold(model, fold, index, table, cache, run));
  }
  out.summary = aggregate_runs(out.runs, 5);
  return out;
}

nlohmann::json to_json(const MultiRunReport& report, const std::string& scheme,
                       std::size_t fold_id) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  return nlohmann::json{{"scheme", scheme},
                        {"fold_id", fold_id},
                        {"metric", "mean-IoU over the fold's test classes; binary-IoU pooled"},
                        {"runs", std::move(runs)},
                        {"summary", to_json(report.summary)}};
}

}  // namespace coseg
