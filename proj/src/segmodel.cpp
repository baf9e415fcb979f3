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

#include "coseg/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "coseg/error.hpp"
#include "coseg/io.hpp"
#include "coseg/rng.hpp"

namespace coseg {

using nlohmann::json;

void ModelConfig::validate() const {
  if (channels == 0) throw ConfigError("channels must be >= 1");
  if (embed_dim == 0) throw ConfigError("embed_dim must be >= 1");
  if (depth == 0) throw ConfigError("depth must be >= 1");
  if (upsample == 0) throw ConfigError("upsample must be >= 1");
  if (encoder == EncoderBackend::Toy && (image_channels == 0 || encoder_hidden == 0)) {
    throw ConfigError("toy encoder extents must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

json to_json(const ModelConfig& cfg) {
  return json{{"channels", cfg.channels},
              {"embed_dim", cfg.embed_dim},
              {"depth", cfg.depth},
              {"tie_blocks", cfg.tie_blocks},
              {"use_embedding", cfg.use_embedding},
              {"encoder", cfg.encoder == EncoderBackend::File ? "file" : "toy"},
              {"image_channels", cfg.image_channels},
              {"encoder_hidden", cfg.encoder_hidden},
              {"upsample", cfg.upsample},
              {"learning_rate", cfg.learning_rate},
              {"momentum", cfg.momentum},
              {"iterations", cfg.iterations},
              {"seed", cfg.seed},
              {"coattention_init_gain", cfg.coattention_init_gain}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "channels") cfg.channels = value.get<std::size_t>();
      else if (key == "embed_dim") cfg.embed_dim = value.get<std::size_t>();
      else if (key == "depth") cfg.depth = value.get<std::size_t>();
      else if (key == "tie_blocks") cfg.tie_blocks = value.get<bool>();
      else if (key == "use_embedding") cfg.use_embedding = value.get<bool>();
      else if (key == "encoder") {
        const auto name = value.get<std::string>();
        if (name == "file") cfg.encoder = EncoderBackend::File;
        else if (name == "toy") cfg.encoder = EncoderBackend::Toy;
        else throw ConfigError("unknown encoder backend '" + name + "' (file|toy)");
      }
      else if (key == "image_channels") cfg.image_channels = value.get<std::size_t>();
      else if (key == "encoder_hidden") cfg.encoder_hidden = value.get<std::size_t>();
      else if (key == "upsample") cfg.upsample = value.get<std::size_t>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "momentum") cfg.momentum = value.get<double>();
      else if (key == "iterations") cfg.iterations = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "coattention_init_gain") cfg.coattention_init_gain = value.get<double>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SegPrediction SegPrediction::from_probabilities(Tensor probabilities) {
  const std::size_t h = probabilities.rows(), w = probabilities.cols();
  std::vector<std::uint8_t> bits(h * w);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = probabilities[i] >= 0.5 ? 1 : 0;
  return {std::move(probabilities), BinaryMask(h, w, std::move(bits))};
}

Tensor bilinear_upsample_matrix(std::size_t in, std::size_t factor) {
  const std::size_t out = in * factor;
  Tensor m({out, in});
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    double w1 = src - static_cast<double>(i0);
    if (i0 >= in - 1) {
      i0 = in - 1;
      w1 = 0.0;
    }
    m(o, i0) += 1.0 - w1;
    if (w1 > 0.0) m(o, i0 + 1) += w1;
  }
  return m;
}

namespace {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * standard_normal(rng);
  return t;
}

}  // namespace

SegModel::SegModel(ModelConfig cfg, std::size_t word_dim) : cfg_(cfg), word_dim_(word_dim) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, "init"));
  if (cfg_.use_embedding) {
    if (word_dim_ == 0) throw ConfigError("word embedding dimension must be positive");
    projection_ = init_projection(word_dim_, cfg_.embed_dim, rng);
    register_parameter("projection.weight", projection_.weight);
    register_parameter("projection.bias", projection_.bias);
  }
  const std::size_t distinct = cfg_.tie_blocks ? 1 : cfg_.depth;
  for (std::size_t b = 0; b < distinct; ++b) {
    auto p = init_coattention(cfg_.channels, cfg_.embed_dim, rng, cfg_.coattention_init_gain);
    const std::string prefix = "block" + std::to_string(b) + ".";
    register_parameter(prefix + "w_co", p.w_co);
    register_parameter(prefix + "w_gate", p.w_gate);
    register_parameter(prefix + "b_gate", p.b_gate);
    register_parameter(prefix + "reproject_w", p.reproject_w);
    register_parameter(prefix + "reproject_b", p.reproject_b);
    blocks_.push_back(std::move(p));
  }
  while (blocks_.size() < cfg_.depth) blocks_.push_back(blocks_.front());

  if (cfg_.encoder == EncoderBackend::Toy) {
    const std::size_t in0 = 4 * cfg_.image_channels, in1 = 4 * cfg_.encoder_hidden;
    encoder_stage0_ = Var::leaf(gaussian({cfg_.encoder_hidden, in0}, 1.0 / std::sqrt(double(in0)), rng));
    encoder_stage1_ = Var::leaf(gaussian({cfg_.channels, in1}, 1.0 / std::sqrt(double(in1)), rng));
    register_parameter("encoder.stage0", encoder_stage0_);
    register_parameter("encoder.stage1", encoder_stage1_);
  }
  head_w_ = Var::leaf(gaussian({1, cfg_.channels}, 1.0 / std::sqrt(double(cfg_.channels)), rng));
  head_b_ = Var::leaf(Tensor({1, 1}));
  register_parameter("decoder.weight", head_w_);
  register_parameter("decoder.bias", head_b_);
}

void SegModel::register_parameter(std::string name, const Var& v) {
  for (const auto& p : params_) {
    if (p.name == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  params_.push_back({std::move(name), v});
}

Parameter& SegModel::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw LookupError("model has no parameter '" + std::string(name) + "'");
}

std::pair<std::size_t, std::size_t> SegModel::output_size(const Tensor& input) const {
  if (input.rank() != 3) {
    throw ConfigError("encoder input must be channels×height×width, got " +
                      shape_string(input.shape()));
  }
  if (cfg_.encoder == EncoderBackend::Toy) return {input.shape()[1], input.shape()[2]};
  return {input.shape()[1] * cfg_.upsample, input.shape()[2] * cfg_.upsample};
}

FeatureMap SegModel::encode(const Tensor& input) const {
  const Shape& s = input.shape();
  if (s.size() != 3) {
    throw ConfigError("encoder input must be channels×height×width, got " + shape_string(s));
  }
  if (cfg_.encoder == EncoderBackend::File) {
    if (s[0] != cfg_.channels) {
      throw ConfigError("feature tensor " + shape_string(s) + " has " + std::to_string(s[0]) +
                        " channels, model expects " + std::to_string(cfg_.channels));
    }
    return {Var::constant(input.reshaped({s[0], s[1] * s[2]})), s[1], s[2]};
  }
  if (s[0] != cfg_.image_channels || s[1] % 4 != 0 || s[2] % 4 != 0) {
    throw ConfigError("toy encoder expects " + std::to_string(cfg_.image_channels) +
                      "×H×W with H, W divisible by 4, got " + shape_string(s));
  }
  const std::size_t h1 = s[1] / 2, w1 = s[2] / 2;
  Var x = tanh(matmul(encoder_stage0_, space_to_depth2(Var::constant(input))));
  x = reshape(x, {cfg_.encoder_hidden, h1, w1});
  x = tanh(matmul(encoder_stage1_, space_to_depth2(x)));
  return {x, h1 / 2, w1 / 2};
}

Var SegModel::decode(const FeatureMap& fq, std::size_t height, std::size_t width) const {
  if (fq.height == 0 || fq.width == 0 || height % fq.height != 0 || width % fq.width != 0) {
    throw ConfigError("cannot upsample a " + std::to_string(fq.height) + "x" +
                      std::to_string(fq.width) + " feature map to " + std::to_string(height) +
                      "x" + std::to_string(width) + " by an integral factor");
  }
  Var logits = add_bias(matmul(head_w_, fq.values), head_b_);
  logits = reshape(logits, {fq.height, fq.width});
  const Var ly = Var::constant(bilinear_upsample_matrix(fq.height, height / fq.height));
  const Var lx_t =
      Var::constant(bilinear_upsample_matrix(fq.width, width / fq.width).transposed());
  return sigmoid(matmul(matmul(ly, logits), lx_t));
}

SemanticVector SegModel::condition(const std::string& label, const EmbeddingTable& table) const {
  if (!cfg_.use_embedding) return {Var::constant(Tensor({cfg_.embed_dim, 1}))};
  return project_embedding(table.lookup(label), projection_);
}

Var SegModel::forward(const EpisodeTensors& ep, const EmbeddingTable& table) const {
  if (ep.support.empty()) throw ContractError("episode has no support items");
  std::vector<Var> support_maps;
  FeatureMap first;
  for (const auto& s : ep.support) {
    FeatureMap f = encode(s);
    if (support_maps.empty()) {
      first = f;
    } else if (f.height != first.height || f.width != first.width ||
               f.channels() != first.channels()) {
      throw DimensionError("support feature maps differ in shape");
    }
    support_maps.push_back(f.values);
  }
  const FeatureMap support{mean(support_maps), first.height, first.width};
  const FeatureMap query = encode(ep.query);
  const SemanticVector z = condition(ep.label, table);
  const auto out = stacked_coattention(support, query, z, blocks_);
  const auto [h, w] = output_size(ep.query);
  return decode(out.query, h, w);
}

SegPrediction SegModel::predict(const EpisodeTensors& ep, const EmbeddingTable& table) const {
  return SegPrediction::from_probabilities(forward(ep, table).value());
}

Var bce_loss(const Var& probabilities, const BinaryMask& gt) {
  const Tensor& p = probabilities.value();
  if (p.rank() != 2 || p.rows() != gt.height() || p.cols() != gt.width()) {
    throw DimensionError("bce_loss: prediction " + shape_string(p.shape()) + " vs mask " +
                         std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= gt.at(i) ? std::log(q) : std::log1p(-q);
  }
  return make_result(Tensor::scalar(total / n), {probabilities},
                     [gt, n](detail::Node& self) {
                       detail::Node* parent = self.parents[0].get();
                       Tensor& g = parent->grad_buffer();
                       const Tensor& pv = parent->value;
                       const double up = self.grad[0] / n;
                       for (std::size_t i = 0; i < pv.size(); ++i) {
                         const double q = pv[i];
                         if (q < kProbabilityClamp || q > 1.0 - kProbabilityClamp) continue;
                         g[i] += up * (gt.at(i) ? -1.0 / q : 1.0 / (1.0 - q));
                       }
                     });
}

double bce_loss(const SegPrediction& pred, const BinaryMask& gt) {
  return bce_loss(Var::constant(pred.probabilities), gt).value()[0];
}

void SgdOptimizer::step(std::vector<Parameter>& params) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.var.shape());
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto grad = params[k].var.grad();
    if (!grad) continue;
    Tensor& value = params[k].var.mutable_leaf_value();
    Tensor& vel = velocity_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel[i] = momentum_ * vel[i] + (*grad)[i];
      value[i] -= lr_ * vel[i];
    }
  }
}

TrainResult train(SegModel& model, const EpisodeSource& source, const EmbeddingTable& table) {
  const ModelConfig& cfg = model.config();
  SgdOptimizer opt(cfg.learning_rate, cfg.momentum);
  TrainResult result;
  result.losses.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const EpisodeTensors ep = source(it);
    zero_grad(model.parameters());
    const Var loss = bce_loss(model.forward(ep, table), ep.gt);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw TrainingDiverged("training diverged: loss is " + std::to_string(value) +
                             " at iteration " + std::to_string(it));
    }
    backward(loss);
    opt.step(model.parameters());
    result.losses.push_back(value);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const SegModel& model) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  std::error_code ec;
  fs::create_directories(parent, ec);
  std::random_device rd;
  const fs::path staging =
      parent / ("." + target.filename().string() + ".staging" + std::to_string(rd()));
  try {
    fs::create_directories(staging / "params");
    json manifest{{"format", "coseg-checkpoint"},
                  {"word_dim", model.word_dim()},
                  {"config", to_json(model.config())},
                  {"parameters", json::object()}};
    for (const auto& p : model.parameters()) {
      const std::string rel = "params/" + p.name + ".ften";
      write_ften(staging / rel, p.var.value());
      manifest["parameters"][p.name] = rel;
    }
    write_text_atomic(staging / "checkpoint.json", manifest.dump(2) + "\n");
    if (fs::exists(target)) fs::remove_all(target);
    fs::rename(staging, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw IoError(std::string("cannot write checkpoint: ") + e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

SegModel load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  json manifest;
  try {
    manifest = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != "coseg-checkpoint") {
    throw ParseError(path.string() + ": not a coseg checkpoint manifest");
  }
  SegModel model(model_config_from_json(manifest.at("config")),
                 manifest.at("word_dim").get<std::size_t>());
  const auto& files = manifest.at("parameters");
  for (auto& p : model.parameters()) {
    if (!files.contains(p.name)) {
      throw ParseError(path.string() + ": missing parameter '" + p.name + "'");
    }
    Tensor value = read_ften(dir / files.at(p.name).get<std::string>());
    if (value.shape() != p.var.shape()) {
      throw DataError(path.string() + ": parameter '" + p.name + "' has shape " +
                      shape_string(value.shape()) + ", expected " +
                      shape_string(p.var.shape()));
    }
    p.var.mutable_leaf_value() = std::move(value);
  }
  return model;
}

}  // namespace coseg
