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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "coseg/cli.hpp"
#include "coseg/coattention.hpp"
#include "coseg/episodes.hpp"
#include "coseg/error.hpp"
#include "coseg/gradcheck.hpp"
#include "coseg/metrics.hpp"
#include "coseg/rng.hpp"

namespace py = pybind11;
using namespace coseg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) {
    return Tensor({static_cast<std::size_t>(a.shape(0)), 1},
                  std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array, got " +
                                          std::to_string(a.ndim()) + " dimensions");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw DimensionError("masks must be 2-D");
  std::vector<std::uint8_t> bits(a.data(), a.data() + a.size());
  for (auto& b : bits) b = b != 0;
  return BinaryMask(a.shape(0), a.shape(1), std::move(bits));
}

// Features arrive as C x H x W and are flattened to C x (H*W) row-major.
FeatureMap to_feature_map(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("feature maps must be C x H x W");
  const auto c = static_cast<std::size_t>(a.shape(0));
  const auto h = static_cast<std::size_t>(a.shape(1));
  const auto w = static_cast<std::size_t>(a.shape(2));
  Tensor t({c, h * w}, std::vector<double>(a.data(), a.data() + a.size()));
  return {Var::constant(std::move(t)), h, w};
}

std::vector<EpisodeResult> to_results(const py::iterable& episodes) {
  std::vector<EpisodeResult> results;
  for (const auto& item : episodes) {
    const auto tup = item.cast<py::tuple>();
    if (tup.size() != 3) throw ContractError("episodes must be (label, pred, gt) triples");
    results.push_back({tup[0].cast<std::string>(),
                       count_pixels(to_mask(tup[1].cast<MaskArray>()),
                                    to_mask(tup[2].cast<MaskArray>()))});
  }
  return results;
}

py::dict fold_to_dict(const FoldSpec& f) {
  py::dict d;
  d["fold_id"] = f.fold_id;
  d["test_classes"] = f.test_classes;
  d["train_classes"] = f.train_classes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_coseg, m) {
  m.doc() = "Word-embedding conditioned co-attention for few-shot segmentation";

  auto base = py::register_exception<Error>(m, "CosegError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", base.ptr());
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("matmul", [](const Array& a, const Array& b) {
    return to_array(matmul(Var::constant(to_tensor(a)), Var::constant(to_tensor(b))).value());
  });
  m.def("softmax_columns", [](const Array& a) {
    return to_array(softmax_columns(Var::constant(to_tensor(a))).value());
  });
  m.def("sigmoid", [](const Array& a) {
    return to_array(sigmoid(Var::constant(to_tensor(a))).value());
  });

  m.def(
      "coattention_block",
      [](const Array& support, const Array& query, const Array& z, std::uint64_t seed,
         double identity_gain) {
        const FeatureMap s = to_feature_map(support), q = to_feature_map(query);
        const Tensor zt = to_tensor(z);
        Rng rng(derive_seed(seed, "coattention"));
        const CoAttentionParams p = init_coattention(s.channels(), zt.rows(), rng, identity_gain);
        const auto out = coattention_block(s, q, SemanticVector{Var::constant(zt)}, p);
        const auto& tr = out.trace;
        py::dict d;
        d["affinity"] = to_array(tr.affinity.raw.value());
        d["affinity_c"] = to_array(tr.affinity.normalized_c.value());
        d["affinity_r"] = to_array(tr.affinity.normalized_r.value());
        d["query_summary"] = to_array(tr.query_summary.values.value());
        d["support_summary"] = to_array(tr.support_summary.values.value());
        d["query_gate"] = to_array(tr.query_gate.gate.value());
        d["support_gate"] = to_array(tr.support_gate.gate.value());
        d["query"] = to_array(out.query.values.value());
        d["support"] = to_array(out.support.values.value());
        return d;
      },
      py::arg("support"), py::arg("query"), py::arg("z"), py::arg("seed") = 0,
      py::arg("identity_gain") = 1.0,
      "Run one co-attention block with freshly initialised parameters. Feature maps are "
      "C x H x W; outputs are flattened to C x (H*W).");

  m.def(
      "iou",
      [](const MaskArray& pred, const MaskArray& gt) { return iou(to_mask(pred), to_mask(gt)); },
      "Foreground IoU, or None when both masks are empty.");
  m.def(
      "mean_iou",
      [](const py::iterable& episodes, const std::vector<std::string>& classes, bool per_episode) {
        const auto results = to_results(episodes);
        return mean_iou(results, classes,
                        per_episode ? ClassAggregation::PerEpisode : ClassAggregation::Dataset);
      },
      py::arg("episodes"), py::arg("classes"), py::arg("per_episode") = false,
      "Mean over classes of per-class IoU. episodes is an iterable of (label, pred, gt).");
  m.def(
      "per_class_iou",
      [](const py::iterable& episodes, const std::vector<std::string>& classes) {
        const auto results = to_results(episodes);
        return per_class_iou(results, classes);
      },
      py::arg("episodes"), py::arg("classes"));
  m.def(
      "binary_iou",
      [](const py::iterable& episodes) {
        const auto results = to_results(episodes);
        return binary_iou(results);
      },
      py::arg("episodes"));

  m.def(
      "make_folds",
      [](const std::vector<std::string>& classes, const std::string& scheme) {
        py::list out;
        for (const auto& f : make_folds(classes, parse_fold_scheme(scheme)))
          out.append(fold_to_dict(f));
        return out;
      },
      py::arg("classes"), py::arg("scheme"));
  m.def("read_class_list", [](const std::filesystem::path& p) { return read_class_list(p); });

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, std::size_t n_classes, std::size_t items_per_class,
         std::size_t image_size, bool two_object, std::uint64_t seed) {
        SyntheticOptions o;
        o.n_classes = n_classes;
        o.items_per_class = items_per_class;
        o.image_size = image_size;
        o.two_object = two_object;
        o.seed = seed;
        return generate_synthetic_dataset(o, out_dir).classes;
      },
      py::arg("out_dir"), py::arg("n_classes") = 8, py::arg("items_per_class") = 20,
      py::arg("image_size") = 16, py::arg("two_object") = false, py::arg("seed") = 0,
      "Write a synthetic benchmark to out_dir and return its class labels.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        const auto r = gradcheck_model(seed);
        py::dict d;
        d["max_relative_error"] = r.max_relative_error;
        d["worst_parameter"] = r.worst_parameter;
        d["checked"] = r.checked;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a coseg subcommand in-process. Returns (exit_code, stdout, stderr).");
}
