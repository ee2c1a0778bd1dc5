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

#include <cstdlib>
#include <fstream>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lse/error.hpp"
#include "lse/pipeline.hpp"
#include "lse/tensor_io.hpp"
#include "test_support.hpp"

namespace lse {
namespace {

using testing::read_bytes;
using testing::TempDir;

// Small toy datasets shared by the tests of one binary run.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spdlog::set_level(spdlog::level::warn);
    data_ = std::make_unique<TempDir>("pipeline_data");
    const auto pair = domain_preset("toy", 21);
    generate_dataset(pair.source, 6, data_->path(), "source", "source");
    generate_dataset(pair.target, 6, data_->path(), "target", "target", 100);
    auto val = pair.target;
    val.seed += 1;
    generate_dataset(val, 4, data_->path(), "val", "target", 200);
    generate_dataset(pair.target, 0, data_->path(), "empty", "target");
  }
  static void TearDownTestSuite() { data_.reset(); }

  static RunConfig config(const std::filesystem::path& out) {
    RunConfig c;
    c.source_manifest = *data_ / "source.json";
    c.target_manifest = *data_ / "target.json";
    c.eval_manifest = *data_ / "val.json";
    c.output_dir = out;
    c.rounds = 2;
    c.steps_per_round = 3;
    c.source_steps = 4;
    c.seed = 5;
    c.initial_portion = 0.3;
    return c;
  }

  static std::unique_ptr<TempDir> data_;
};

std::unique_ptr<TempDir> PipelineTest::data_;

TEST(BatchIndicesTest, EachEpochIsAPermutation) {
  const std::size_t n = 7;
  std::vector<std::size_t> seen;
  for (std::uint64_t step = 0; step < 7; ++step) {
    const auto b = batch_indices(3, n, 3, step);
    ASSERT_EQ(b.size(), 3u);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> items(seen.begin() + epoch * n, seen.begin() + (epoch + 1) * n);
    EXPECT_EQ(items.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(items.count(i), 1u) << "epoch " << epoch;
  }
  EXPECT_EQ(batch_indices(3, n, 3, 4), batch_indices(3, n, 3, 4));
  EXPECT_TRUE(batch_indices(3, 0, 3, 0).empty());
  EXPECT_TRUE(batch_indices(3, 5, 0, 0).empty());
}

TEST(BatchIndicesTest, BatchLargerThanDataset) {
  const auto b = batch_indices(1, 2, 5, 0);
  ASSERT_EQ(b.size(), 5u);
  for (auto i : b) EXPECT_LT(i, 2u);
}

TEST_F(PipelineTest, ZeroSourceStepsKeepsInitialWeights) {
  TempDir out("zero_steps");
  auto cfg = config(out.path());
  cfg.source_steps = 0;
  const auto path = train_source(cfg);
  const Checkpoint saved = read_checkpoint(path);
  const Checkpoint init = initial_checkpoint(cfg, kSceneClassCount);
  EXPECT_EQ(saved.params.conv1_weight, init.params.conv1_weight);
  EXPECT_EQ(saved.params.head_bias, init.params.head_bias);
  EXPECT_EQ(saved.state.step, 0u);
  for (const char* f : {"source/report_source.csv", "source/report_target.csv", "source/confusion_target.lst"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
}

TEST_F(PipelineTest, SourceTrainingIsDeterministic) {
  TempDir a("src_a");
  TempDir b("src_b");
  EXPECT_EQ(read_bytes(train_source(config(a.path()))), read_bytes(train_source(config(b.path()))));
  EXPECT_EQ(read_bytes(a / "losses.csv"), read_bytes(b / "losses.csv"));
}

TEST_F(PipelineTest, RunWritesArtifactsAndHistory) {
  TempDir out("run");
  const auto cfg = config(out.path());
  const RunSummary s = run_adaptation(cfg);
  ASSERT_TRUE(s.source_only && s.adapted);
  EXPECT_EQ(s.final_state.round, 2u);
  ASSERT_EQ(s.final_state.history.size(), 2u);
  EXPECT_EQ(s.final_state.target_miou.size(), 2u);
  for (const char* f : {"run.json", "losses.csv", "selection_history.csv", "report.csv", "confusion.lst",
                        "summary.json", "round_0/model.lsec", "round_0/selection.json", "round_0/archive/index.json",
                        "round_1/model.lsec", "round_1/report.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  const auto run = nlohmann::json::parse(read_bytes(out / "run.json"));
  EXPECT_EQ(run.at("config").at("run").at("seed"), 5);
  EXPECT_TRUE(run.at("versions").contains("lse"));

  // Thresholds saved each round are the ones that round's selection produced.
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& sel = s.final_state.history[r];
    EXPECT_EQ(sel.round, r);
    EXPECT_NEAR(sel.portion, 0.3 + 0.05 * static_cast<double>(r), 1e-12);
    const auto saved = selection_from_json(
        nlohmann::json::parse(read_bytes(out / ("round_" + std::to_string(r)) / "selection.json")));
    EXPECT_EQ(saved.selected, sel.selected);
    for (std::size_t c = 0; c < kSceneClassCount; ++c) EXPECT_EQ(saved.thresholds.get(c), sel.thresholds.get(c));
  }
  EXPECT_EQ(s.final_state.thresholds.get(0), s.final_state.history.back().thresholds.get(0));

  const auto history = read_selection_history_csv(out / "selection_history.csv");
  ASSERT_EQ(history.rounds.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(history.rounds[r].per_class_count, s.final_state.history[r].per_class_count);
  }

  // losses.csv holds one row per optimizer step.
  std::ifstream log(out / "losses.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 1 + cfg.source_steps + cfg.rounds * cfg.steps_per_round);
}

TEST_F(PipelineTest, IdenticalRunsAreByteIdentical) {
  TempDir a("det_a");
  TempDir b("det_b");
  run_adaptation(config(a.path()));
  run_adaptation(config(b.path()));
  std::size_t compared = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    if (rel == "run.json") continue;  // records the output directory
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 20u);
}

TEST_F(PipelineTest, ZeroedAdaptationTermEqualsSourceContinuation) {
  TempDir adapted("traj_adapt");
  auto cfg = config(adapted.path());
  cfg.focal_weight = 0;
  cfg.filter = FilterMode::kNone;
  run_adaptation(cfg);

  TempDir source("traj_source");
  auto longer = config(source.path());
  longer.source_steps = cfg.source_steps + cfg.rounds * cfg.steps_per_round;
  const auto continued = train_source(longer);
  EXPECT_EQ(read_bytes(adapted / "round_1" / "model.lsec"), read_bytes(continued));
}

TEST_F(PipelineTest, InitCheckpointSkipsSourceTraining) {
  TempDir src("init_src");
  const auto ck = train_source(config(src.path()));
  TempDir out("init_run");
  auto cfg = config(out.path());
  cfg.init_checkpoint = ck;
  cfg.rounds = 1;
  run_adaptation(cfg);
  EXPECT_FALSE(std::filesystem::exists(out / "source"));
  EXPECT_TRUE(std::filesystem::exists(out / "round_0" / "model.lsec"));
}

TEST_F(PipelineTest, EmptyTargetSetAbortsWithDiagnostic) {
  TempDir out("empty_target");
  auto cfg = config(out.path());
  cfg.target_manifest = *data_ / "empty.json";
  try {
    run_adaptation(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("target set is empty"), std::string::npos) << e.what();
  }
}

TEST_F(PipelineTest, AllFilteredRoundStillTrains) {
  TempDir out("all_filtered");
  auto cfg = config(out.path());
  cfg.filter = FilterMode::kNone;
  cfg.rounds = 1;
  const RunSummary s = run_adaptation(cfg);
  EXPECT_EQ(s.final_state.round, 1u);
  std::ifstream log(out / "losses.csv");
  std::string line;
  std::getline(log, line);
  while (std::getline(log, line)) {
    if (line.rfind("0,", 0) != 0) continue;
    // round,step,loss_src,loss_ce,loss_fl,total: no pixel passes, so CE on patches is zero.
    const auto first = line.find(',', 2);
    const auto second = line.find(',', first + 1);
    const auto third = line.find(',', second + 1);
    EXPECT_EQ(std::stod(line.substr(second + 1, third - second - 1)), 0.0) << line;
  }
}

TEST_F(PipelineTest, RefusesMislabelledManifests) {
  TempDir out("mislabelled");
  auto cfg = config(out.path());
  cfg.target_manifest = *data_ / "source.json";
  EXPECT_THROW(run_adaptation(cfg), ConfigError);
  cfg = config(out.path());
  cfg.source_manifest = *data_ / "target.json";
  EXPECT_THROW(run_adaptation(cfg), ConfigError);
  cfg = config(out.path());
  cfg.source_manifest = *data_ / "missing.json";
  EXPECT_THROW(run_adaptation(cfg), ConfigError);
}

TEST_F(PipelineTest, DivergenceReportsStep) {
  TempDir out("diverge");
  auto cfg = config(out.path());
  cfg.learning_rate = 1e30;
  cfg.source_steps = 5;
  try {
    train_source(cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at optimizer step"), std::string::npos) << e.what();
  }
}

TEST_F(PipelineTest, PatchConfigDefaultsToHalfScale) {
  const RunConfig cfg = config("unused");
  const auto p = patch_config(cfg, 32, 64);
  EXPECT_EQ(p.patch_height, 16u);
  EXPECT_EQ(p.patch_width, 32u);
  EXPECT_EQ(p.output_height, 32u);
  EXPECT_EQ(p.output_width, 64u);
  EXPECT_EQ(p.patches_per_image, 4u);
  RunConfig custom = cfg;
  custom.patch_height = 8;
  custom.patch_width = 16;
  const auto q = patch_config(custom, 32, 64);
  EXPECT_EQ(q.patch_width, 16u);
  EXPECT_EQ(q.output_width, 64u);
  // Patches are zoomed back to the model's input size.
  custom.output_width = 32;
  EXPECT_THROW(patch_config(custom, 32, 64), ConfigError);
}

#ifdef LSE_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(LSE_CLI_PATH) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(PipelineTest, CliExitCodes) {
  TempDir dir("cli");
  EXPECT_EQ(run_cli("gen-data --spec toy --n 3 --n-val 2 --out " + (dir / "d").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "d" / "source.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "d" / "target_val.json"));

  std::ofstream(dir / "run.toml") << "[data]\nsource_manifest = \"d/source.json\"\n"
                                     "target_manifest = \"d/target.json\"\neval_manifest = \"d/target_val.json\"\n"
                                     "[run]\nrounds = 1\nsteps_per_round = 1\nsource_steps = 1\n";
  const std::string run_dir = (dir / "run").string();
  EXPECT_EQ(run_cli("adapt --config " + (dir / "run.toml").string() + " --out " + run_dir), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "report.csv"));
  EXPECT_EQ(run_cli("eval --checkpoint " + run_dir + "/round_0/model.lsec --manifest " +
                    (dir / "d" / "target_val.json").string() + " --out " + (dir / "ev").string()),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "ev" / "report.csv"));
  EXPECT_EQ(run_cli("score --checkpoint " + run_dir + "/round_0/model.lsec --manifest " +
                    (dir / "d" / "target.json").string() + " --out " + (dir / "scores.csv").string()),
            0);
  EXPECT_EQ(run_cli("report --with " + run_dir + "/selection_history.csv --without " + run_dir +
                    "/selection_history.csv --out " + (dir / "fig.csv").string()),
            0);

  EXPECT_EQ(run_cli("adapt --bogus-flag"), 1);
  EXPECT_EQ(run_cli("gen-data --n 3"), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("adapt --config " + (dir / "run.toml").string() + " --set run.rounds=0"), 2);
  EXPECT_EQ(run_cli("adapt --config " + (dir / "run.toml").string() + " --set run.nope=1"), 2);
}
#endif

}  // namespace
}  // namespace lse
