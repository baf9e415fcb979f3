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

#include "coseg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <sstream>

#include "coseg/embeddings.hpp"
#include "coseg/episodes.hpp"
#include "coseg/error.hpp"
#include "coseg/gradcheck.hpp"
#include "coseg/io.hpp"
#include "coseg/pipeline.hpp"
#include "coseg/render.hpp"
#include "coseg/rng.hpp"
#include "coseg/segmodel.hpp"

namespace coseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataArgs {
  std::string data_dir;
  std::string classes_file;
  std::string embeddings_file;
  std::string scheme = "synthetic";
  std::size_t fold = 0;

  fs::path classes_path() const {
    return classes_file.empty() ? fs::path(data_dir) / "classes.txt" : fs::path(classes_file);
  }
  fs::path embeddings_path() const {
    return embeddings_file.empty() ? fs::path(data_dir) / "embeddings.txt"
                                   : fs::path(embeddings_file);
  }
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.data_dir, "Dataset directory holding manifest.jsonl")->required();
  cmd->add_option("--fold", a.fold, "Fold index")->required();
  cmd->add_option("--scheme", a.scheme, "Fold scheme: pascal, vos or synthetic");
  cmd->add_option("--classes", a.classes_file, "Class ordering file (default <data>/classes.txt)");
  cmd->add_option("--embeddings", a.embeddings_file,
                  "Embedding table (default <data>/embeddings.txt)");
}

FoldSpec select_fold(const DataArgs& a) {
  const auto classes = read_class_list(a.classes_path());
  const auto folds = make_folds(classes, parse_fold_scheme(a.scheme));
  if (a.fold >= folds.size()) {
    throw ConfigError("fold " + std::to_string(a.fold) + " out of range; scheme " + a.scheme +
                      " has " + std::to_string(folds.size()) + " folds");
  }
  return folds[a.fold];
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--dims expects C,WH,d with positive integers, got '" + text + "'");
    }
  }
  if (out.size() != 3) throw ConfigError("--dims expects C,WH,d, got '" + text + "'");
  return out;
}

int cmd_split_folds(const std::string& scheme, const std::string& classes_file,
                    const std::string& out_file, std::ostream& out) {
  const auto s = parse_fold_scheme(scheme);
  const auto classes = read_class_list(classes_file);
  const auto folds = make_folds(classes, s);
  write_text_atomic(out_file, folds_to_json(s, classes, folds).dump(2) + "\n");
  out << "wrote " << folds.size() << " folds x " << folds.front().test_classes.size()
      << " test classes to " << out_file << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, const std::string& dims_text,
                  std::ostream& out) {
  GradCheckDims dims;
  if (!dims_text.empty()) {
    const auto d = parse_dims(dims_text);
    dims = {d[0], d[1], d[2]};
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < seeds; ++k) {
    const auto r = gradcheck_model(seed + k, dims);
    out << "seed " << seed + k << ": max relative error " << std::scientific
        << std::setprecision(3) << r.max_relative_error << " over " << r.checked
        << " parameters (worst " << r.worst_parameter << "[" << r.worst_index << "])\n";
    worst = std::max(worst, r.max_relative_error);
  }
  out << "max relative error: " << std::scientific << std::setprecision(3) << worst
      << (worst <= kGradCheckTolerance ? " (pass)" : " (FAIL)") << "\n";
  return worst <= kGradCheckTolerance ? kExitOk : kExitInvalid;
}

struct TrainArgs {
  DataArgs data;
  std::string config_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  bool baseline = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig cfg;
  if (!a.config_file.empty()) {
    try {
      cfg = model_config_from_json(json::parse(read_text(a.config_file)));
    } catch (const json::parse_error& e) {
      throw ParseError(a.config_file + ": " + e.what());
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.baseline) cfg.use_embedding = false;

  const FoldSpec fold = select_fold(a.data);
  const auto index = load_manifest(fs::path(a.data.data_dir) / "manifest.jsonl");
  const auto table = load_embedding_table(a.data.embeddings_path());
  SegModel model(cfg, table.dim());
  DataCache cache(index);
  const auto result = train_on_fold(model, fold, index, table, cache);

  save_checkpoint(a.out_dir, model);
  const json log{{"scheme", a.data.scheme},
                 {"fold_id", fold.fold_id},
                 {"validation", "V2: fixed iteration budget, no test-class selection"},
                 {"iterations", cfg.iterations},
                 {"losses", result.losses}};
  write_text_atomic(fs::path(a.out_dir) / "train_log.json", log.dump(2) + "\n");
  out << "trained " << cfg.iterations << " iterations on fold " << fold.fold_id;
  if (!result.losses.empty()) {
    out << ": loss " << result.losses.front() << " -> " << result.losses.back();
  }
  out << "\ncheckpoint written to " << a.out_dir << "\n";
  return kExitOk;
}

struct EvalArgs {
  DataArgs data;
  std::string ckpt;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  std::size_t episodes = 200;
  std::string report;
  bool per_episode = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const FoldSpec fold = select_fold(a.data);
  const auto index = load_manifest(fs::path(a.data.data_dir) / "manifest.jsonl");
  const auto table = load_embedding_table(a.data.embeddings_path());
  const SegModel model = load_checkpoint(a.ckpt);
  DataCache cache(index);
  EvalOptions opts;
  opts.scheme = a.data.scheme;
  opts.episodes = a.episodes;
  opts.seed = a.seed;
  opts.aggregation = a.per_episode ? ClassAggregation::PerEpisode : ClassAggregation::Dataset;
  const auto report = evaluate_runs(model, fold, index, table, cache, opts, a.runs);
  const json j = to_json(report, a.data.scheme, fold.fold_id);
  write_text_atomic(a.report, j.dump(2) + "\n");
  out << "mean-IoU " << report.summary.mean_iou.mean << " (sd " << report.summary.mean_iou.stddev
      << "), binary-IoU " << report.summary.binary_iou.mean << " (sd "
      << report.summary.binary_iou.stddev << ") over " << report.runs.size() << " runs\n";
  if (report.summary.warning) out << "warning: " << *report.summary.warning << "\n";
  return kExitOk;
}

struct RenderArgs {
  std::string episode;
  std::string ckpt;
  std::string out;
  std::string embeddings;
  std::uint64_t seed = 0;
};

int cmd_render(const RenderArgs& a, std::ostream& out) {
  const auto colon = a.episode.rfind(':');
  if (colon == std::string::npos) {
    throw ConfigError("--episode expects <manifest>:<line>, got '" + a.episode + "'");
  }
  const fs::path manifest = a.episode.substr(0, colon);
  std::size_t line = 0;
  try {
    line = std::stoul(a.episode.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("--episode line number is not a number: '" + a.episode + "'");
  }
  const auto index = load_manifest(manifest);
  // Records are numbered by non-blank manifest lines, starting at 1.
  if (line == 0 || line > index.items().size()) {
    throw ConfigError("--episode line " + std::to_string(line) + " outside manifest of " +
                      std::to_string(index.items().size()) + " records");
  }
  const DatasetItem& query = index.items()[line - 1];

  const DatasetItem* support = nullptr;
  if (query.sequence) {
    for (const auto& s : index.sequences_of(query.class_label)) {
      if (s.id == *query.sequence) support = s.records.front();
    }
  } else {
    std::vector<const DatasetItem*> others;
    for (std::size_t i : index.items_of(query.class_label)) {
      if (i != line - 1) others.push_back(&index.items()[i]);
    }
    if (!others.empty()) {
      Rng rng(derive_seed(a.seed, "render"));
      support = others[uniform_index(rng, others.size())];
    }
  }
  if (support == nullptr || support == &query) {
    throw SamplingError("class '" + query.class_label + "' has no other item to use as support");
  }

  const auto table = load_embedding_table(
      a.embeddings.empty() ? index.root() / "embeddings.txt" : fs::path(a.embeddings));
  const SegModel model = load_checkpoint(a.ckpt);
  DataCache cache(index);
  Episode ep;
  ep.support.push_back({support->input_path, support->image_path, query.class_label, support->frame});
  ep.query_path = query.input_path;
  ep.query_image_path = query.image_path;
  ep.gt_mask_path = query.mask_path;
  ep.class_label = query.class_label;
  const auto tensors = load_episode(ep, model.config(), cache);
  const auto pred = model.predict(tensors, table);

  auto display = [&](const DatasetItem& item) {
    return cache.tensor(item.image_path ? *item.image_path : item.input_path);
  };
  const Raster r = render_episode(display(*support), display(query), pred.binarized);
  write_file_atomic(a.out, encode_pgm(r.height, r.width, r.pixels));
  out << "rendered class '" << query.class_label << "' to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot segmentation with word-embedding-conditioned stacked co-attention",
               "coseg"};
  app.require_subcommand(1);

  std::string scheme, classes_file, folds_out;
  auto* split = app.add_subcommand("split-folds", "Partition a class list into folds");
  split->add_option("--scheme", scheme, "pascal, vos or synthetic")->required();
  split->add_option("--classes", classes_file, "Class ordering, one label per line")->required();
  split->add_option("--out", folds_out, "Output folds.json")->default_val("folds.json");

  SyntheticOptions synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic few-shot dataset");
  gen->add_option("--classes", synth.n_classes, "Number of classes");
  gen->add_option("--per-class", synth.items_per_class, "Items per class");
  gen->add_flag("--two-object", synth.two_object, "Add a partner-class distractor blob");
  gen->add_option("--seed", synth.seed, "Random seed");
  gen->add_option("--image-size", synth.image_size, "Square image extent");
  gen->add_option("--channels", synth.channels, "Feature channels");
  gen->add_option("--word-dim", synth.word_dim, "Embedding dimension");
  gen->add_option("--feature-stride", synth.feature_stride, "Image size / feature size");
  gen->add_option("--out", synth_out, "Output directory")->required();

  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 1;
  std::string gc_dims;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  gc->add_option("--seed", gc_seed, "First seed");
  gc->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  gc->add_option("--dims", gc_dims, "C,WH,d (default 8,16,6)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train on a fold's training classes");
  add_data_options(tr, ta.data);
  tr->add_option("--config", ta.config_file, "Model config JSON");
  tr->add_option("--out", ta.out_dir, "Checkpoint directory")->required();
  tr->add_option("--seed", ta.seed, "Override the config seed");
  tr->add_option("--iterations", ta.iterations, "Override the config iteration count");
  tr->add_flag("--baseline", ta.baseline, "Train the no-word-embedding baseline");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a fold's test classes");
  add_data_options(ev, ea.data);
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint directory")->required();
  ev->add_option("--runs", ea.runs, "Number of evaluation runs")->check(CLI::PositiveNumber);
  ev->add_option("--seed", ea.seed, "Evaluation seed");
  ev->add_option("--episodes", ea.episodes, "Episodes per run")->check(CLI::PositiveNumber);
  ev->add_option("--report", ea.report, "Report JSON path")->required();
  ev->add_flag("--per-episode", ea.per_episode, "Average per-episode IoUs within each class");

  RenderArgs ra;
  auto* rd = app.add_subcommand("render", "Write a support/query/prediction panel as PGM");
  rd->add_option("--episode", ra.episode, "<manifest>:<record line> of the query")->required();
  rd->add_option("--ckpt", ra.ckpt, "Checkpoint directory")->required();
  rd->add_option("--out", ra.out, "Output PGM")->required();
  rd->add_option("--embeddings", ra.embeddings, "Embedding table");
  rd->add_option("--seed", ra.seed, "Seed for choosing the support item");

  std::vector<const char*> argv{"coseg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitInvalid;
  }

  try {
    if (*split) return cmd_split_folds(scheme, classes_file, folds_out, out);
    if (*gen) {
      const auto ds = generate_synthetic_dataset(synth, synth_out);
      out << "wrote " << ds.index.items().size() << " items over " << ds.classes.size()
          << " classes to " << synth_out << "\n";
      return kExitOk;
    }
    if (*gc) return cmd_gradcheck(gc_seed, gc_seeds, gc_dims, out);
    if (*tr) return cmd_train(ta, out);
    if (*ev) return cmd_eval(ea, out);
    if (*rd) return cmd_render(ra, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitInvalid;
}

}  // namespace coseg
