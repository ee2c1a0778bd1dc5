/* Copyright 2026 The LSE Authors. All Rights Reserved.

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

// Command-line front end: data generation, training, adaptation and reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lse/config.hpp"
#include "lse/error.hpp"
#include "lse/evaluate.hpp"
#include "lse/model.hpp"
#include "lse/pipeline.hpp"
#include "lse/rng.hpp"
#include "lse/selection.hpp"
#include "lse/synth_data.hpp"
#include "lse/tensor_io.hpp"
#include "lse/tensor_ops.hpp"
#include "lse/version.hpp"

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string init_checkpoint;
  std::int64_t seed = -1;
  std::int64_t rounds = -1;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. loss.focal_weight=0");
  cmd->add_option("--out", o.out, "Output directory (run.output_dir)");
  cmd->add_option("--seed", o.seed, "Run seed (run.seed)");
  cmd->add_option("--rounds", o.rounds, "Adaptation rounds (run.rounds)");
  cmd->add_option("--init-checkpoint", o.init_checkpoint, "Start from this checkpoint instead of source training");
}

lse::RunConfig resolve_config(const RunOptions& o) {
  lse::ConfigTable table = lse::read_config_file(o.config);
  for (const auto& kv : o.overrides) lse::apply_override(table, kv);
  if (!o.out.empty()) table["data"]["output_dir"] = o.out;
  if (o.seed >= 0) table["run"]["seed"] = o.seed;
  if (o.rounds >= 0) table["run"]["rounds"] = o.rounds;
  if (!o.init_checkpoint.empty()) table["run"]["init_checkpoint"] = o.init_checkpoint;
  lse::RunConfig cfg = lse::RunConfig::from_table(table);

  // Relative manifest paths in a config file are relative to that file.
  const fs::path base = fs::path(o.config).parent_path();
  for (fs::path* p : {&cfg.source_manifest, &cfg.target_manifest, &cfg.eval_manifest}) {
    if (!p->empty() && p->is_relative() && !fs::exists(*p) && fs::exists(base / *p)) *p = base / *p;
  }
  return cfg;
}

int gen_data(const std::string& preset, std::size_t n, std::size_t n_val, std::uint64_t seed, const fs::path& out) {
  lse::generate_benchmark(preset, n, n_val, seed, out);
  spdlog::info("wrote {} source, {} target and {} validation scenes to {}", n, n, n_val, out.string());
  return 0;
}

int eval_cmd(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out) {
  const lse::Checkpoint ck = lse::read_checkpoint(checkpoint);
  const lse::LabeledSet data = lse::LabeledSet::from_manifest(lse::read_manifest(manifest));
  const lse::Evaluation eval = lse::evaluate_model(ck.params, data);
  fs::create_directories(out);
  lse::write_report_csv(out / "report.csv", eval.report);
  lse::write_tensor(out / "confusion.lst", eval.confusion.to_tensor());
  std::cout << "miou," << eval.report.miou << "\npixel_accuracy," << eval.report.pixel_accuracy << '\n';
  return 0;
}

int score_cmd(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out) {
  const lse::Checkpoint ck = lse::read_checkpoint(checkpoint);
  const lse::DatasetManifest manifest = lse::read_manifest(manifest_path);
  const std::size_t classes = ck.params.classes();
  std::ofstream csv;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    csv.open(out, std::ios::trunc);
    if (!csv) throw lse::IoError("cannot write " + out.string());
    os = &csv;
  }
  os->precision(9);
  *os << "id";
  for (std::size_t c = 0; c < classes; ++c) *os << ",u_" << c;
  *os << '\n';
  for (const auto& item : manifest.items) {
    const auto image = lse::read_tensor_as<float>(manifest.image_path(item));
    const lse::ClassConfidence u = lse::score_image(lse::softmax(lse::predict_logits(ck.params, image)));
    *os << item.id;
    for (const auto& v : u.per_class) {
      *os << ',';
      if (v) *os << *v;
    }
    *os << '\n';
  }
  return 0;
}

int report_cmd(const fs::path& with_path, const fs::path& without_path, const fs::path& out) {
  const auto with_focal = lse::read_selection_history_csv(with_path);
  const auto without_focal = lse::read_selection_history_csv(without_path);
  lse::write_selection_report_csv(out, lse::selection_report(with_focal, without_focal));
  for (std::size_t r = 0; r < std::min(with_focal.rounds.size(), without_focal.rounds.size()); ++r) {
    std::cout << "round " << r << ": per-class count stddev with focal "
              << lse::class_count_stddev(with_focal.rounds[r]) << ", without "
              << lse::class_count_stddev(without_focal.rounds[r]) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-invariant self-training for segmentation domain adaptation"};
  app.set_version_flag("--version", lse::kVersion);
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  std::string preset = "default";
  std::size_t n = 200;
  std::size_t n_val = 0;
  bool n_val_set = false;
  std::uint64_t data_seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("gen-data", "Generate source/target synthetic datasets and manifests");
  gen->add_option("--spec", preset, "Domain preset: default or toy")->check(CLI::IsMember({"default", "toy"}));
  gen->add_option("--n", n, "Scenes per domain")->required();
  gen->add_option("--n-val", n_val, "Labelled target scenes for evaluation (default: n)")
      ->each([&](const std::string&) { n_val_set = true; });
  gen->add_option("--seed", data_seed, "Dataset seed");
  gen->add_option("--out", out, "Output directory")->required();

  RunOptions train_opts;
  auto* train = app.add_subcommand("train-source", "Train on the labelled source domain only");
  add_run_options(train, train_opts);

  RunOptions adapt_opts;
  auto* adapt = app.add_subcommand("adapt", "Source training followed by self-training rounds");
  add_run_options(adapt, adapt_opts);

  std::string checkpoint;
  std::string manifest;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled manifest");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint (.lsec)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "Labelled manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Output directory for report.csv and confusion.lst");

  auto* score = app.add_subcommand("score", "Per-image class confidence table");
  score->add_option("--checkpoint", checkpoint, "Model checkpoint (.lsec)")->required()->check(CLI::ExistingFile);
  score->add_option("--manifest", manifest, "Image manifest")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "CSV path (default: standard output)");

  std::string with_path;
  std::string without_path;
  auto* report = app.add_subcommand("report", "Per-class selection counts with and without the focal term");
  report->add_option("--with", with_path, "selection_history.csv of the focal run")->required()->check(CLI::ExistingFile);
  report->add_option("--without", without_path, "selection_history.csv of the run without focal term")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*gen) return gen_data(preset, n, n_val_set ? n_val : n, data_seed, out);
    if (*train) {
      const fs::path ck = lse::train_source(resolve_config(train_opts));
      std::cout << ck.string() << '\n';
      return 0;
    }
    if (*adapt) {
      const lse::RunSummary s = lse::run_adaptation(resolve_config(adapt_opts));
      if (s.source_only && s.adapted) {
        std::cout << "source_only_miou," << s.source_only->miou << "\nadapted_miou," << s.adapted->miou << '\n';
      }
      return 0;
    }
    if (*eval) return eval_cmd(checkpoint, manifest, out.empty() ? fs::path(".") : fs::path(out));
    if (*score) return score_cmd(checkpoint, manifest, out);
    if (*report) return report_cmd(with_path, without_path, out);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
