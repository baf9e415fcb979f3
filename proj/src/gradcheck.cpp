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

#include "coseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "coseg/error.hpp"
#include "coseg/rng.hpp"
#include "coseg/segmodel.hpp"

namespace coseg {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<Var()>& loss, std::span<Parameter> params,
                                double step) {
  zero_grad(params);
  backward(loss());
  GradCheckResult result;
  for (auto& p : params) {
    const Tensor analytic = p.var.grad().value_or(Tensor(p.var.shape()));
    Tensor& value = p.var.mutable_leaf_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss().value()[0];
      value[i] = saved - step;
      const double down = loss().value()[0];
      value[i] = saved;
      const double err = relative_error(analytic[i], (up - down) / (2.0 * step));
      ++result.checked;
      if (result.worst_parameter.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

GradCheckResult gradcheck_model(std::uint64_t seed, const GradCheckDims& dims) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(dims.locations))));
  if (side * side != dims.locations || side == 0) {
    throw ConfigError("gradcheck: W·H = " + std::to_string(dims.locations) +
                      " is not a perfect square");
  }
  constexpr std::size_t kWordDim = 5;
  ModelConfig cfg;
  cfg.channels = dims.channels;
  cfg.embed_dim = dims.embed_dim;
  cfg.depth = 2;
  cfg.encoder = EncoderBackend::Toy;
  cfg.image_channels = 3;
  cfg.encoder_hidden = 4;
  cfg.seed = seed;
  SegModel model(cfg, kWordDim);

  Rng rng(derive_seed(seed, "gradcheck"));
  // Move parameters off their structured initialization (zero biases, identity W_co).
  for (auto& p : model.parameters()) {
    for (auto& v : p.var.mutable_leaf_value().data()) v += 0.2 * standard_normal(rng);
  }

  const std::size_t image = 4 * side;
  auto random_image = [&] {
    Tensor t({cfg.image_channels, image, image});
    for (auto& v : t.data()) v = standard_normal(rng);
    return t;
  };
  EpisodeTensors ep;
  ep.support.push_back(random_image());
  ep.query = random_image();
  ep.label = "probe";
  std::vector<std::uint8_t> bits(image * image);
  for (auto& b : bits) b = uniform01(rng) < 0.3 ? 1 : 0;
  ep.gt = BinaryMask(image, image, std::move(bits));

  EmbeddingTable table(kWordDim);
  std::vector<double> word(kWordDim);
  for (auto& v : word) v = standard_normal(rng);
  table.insert("probe", word);

  return check_gradients([&] { return bce_loss(model.forward(ep, table), ep.gt); },
                         model.parameters());
}

}  // namespace coseg
