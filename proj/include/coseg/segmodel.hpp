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
#include <functional>
#include <string>
#include <vector>

#include "coseg/coattention.hpp"
#include "coseg/embeddings.hpp"
#include "coseg/mask.hpp"
#include "coseg/tensor.hpp"

#include <json.hpp>

namespace coseg {

enum class EncoderBackend { File, Toy };

struct ModelConfig {
  std::size_t channels = 8;
  std::size_t embed_dim = kDefaultEmbedDim;
  std::size_t depth = kDefaultDepth;
  bool tie_blocks = false;
  // false gives the no-embedding baseline: z ≡ 0 and no projection layer.
  bool use_embedding = true;
  EncoderBackend encoder = EncoderBackend::File;
  std::size_t image_channels = 3;  // toy backend input channels
  std::size_t encoder_hidden = 8;  // toy backend width after the first stage
  std::size_t upsample = 2;        // file backend: image size / feature size
  double learning_rate = 0.003;
  double momentum = 0.9;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  double coattention_init_gain = 1.0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct SegPrediction {
  Tensor probabilities;  // H_img × W_img, entries in [0, 1]
  BinaryMask binarized;  // probabilities >= 0.5

  static SegPrediction from_probabilities(Tensor probabilities);
};

// Inputs of one episode after file loading. Support entries are encoder inputs
// (feature maps for the file backend, images for the toy backend).
struct EpisodeTensors {
  std::vector<Tensor> support;
  Tensor query;
  std::string label;
  BinaryMask gt;
};

// Align-corners=false bilinear interpolation weights, (in·factor) × in.
Tensor bilinear_upsample_matrix(std::size_t in, std::size_t factor);

class SegModel {
 public:
  SegModel(ModelConfig cfg, std::size_t word_dim);
  SegModel(SegModel&&) = default;
  SegModel& operator=(SegModel&&) = default;
  SegModel(const SegModel&) = delete;
  SegModel& operator=(const SegModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  std::size_t word_dim() const { return word_dim_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);

  // Image size the model predicts for an encoder input of this shape.
  std::pair<std::size_t, std::size_t> output_size(const Tensor& input) const;

  FeatureMap encode(const Tensor& input) const;
  // 1×1 channel mixing to one logit per location, bilinear upsampling, sigmoid.
  Var decode(const FeatureMap& fq, std::size_t height, std::size_t width) const;
  SemanticVector condition(const std::string& label, const EmbeddingTable& table) const;

  // Probability grid as a graph node, for training.
  Var forward(const EpisodeTensors& ep, const EmbeddingTable& table) const;
  SegPrediction predict(const EpisodeTensors& ep, const EmbeddingTable& table) const;

  const ProjectionParams& projection() const { return projection_; }
  std::span<const CoAttentionParams> blocks() const { return blocks_; }

 private:
  void register_parameter(std::string name, const Var& v);

  ModelConfig cfg_;
  std::size_t word_dim_;
  ProjectionParams projection_;
  std::vector<CoAttentionParams> blocks_;
  Var encoder_stage0_;
  Var encoder_stage1_;
  Var head_w_;
  Var head_b_;
  std::vector<Parameter> params_;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Mean pixel binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
Var bce_loss(const Var& probabilities, const BinaryMask& gt);
double bce_loss(const SegPrediction& pred, const BinaryMask& gt);

class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}
  void step(std::vector<Parameter>& params);

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

using EpisodeSource = std::function<EpisodeTensors(std::size_t iteration)>;

struct TrainResult {
  std::vector<double> losses;  // one per iteration, before the update
};

// Exactly cfg.iterations gradient steps on the episodes `source` yields.
TrainResult train(SegModel& model, const EpisodeSource& source, const EmbeddingTable& table);

// Directory holding checkpoint.json plus one FTEN file per parameter.
void save_checkpoint(const std::filesystem::path& dir, const SegModel& model);
SegModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace coseg
