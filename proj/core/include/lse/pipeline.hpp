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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "lse/config.hpp"
#include "lse/evaluate.hpp"
#include "lse/losses.hpp"
#include "lse/model.hpp"
#include "lse/scale_examples.hpp"
#include "lse/selection.hpp"
#include "lse/synth_data.hpp"

namespace lse {

/// Images with ground truth: the source domain, or a target split opened for
/// evaluation only.
struct LabeledSet {
  std::vector<ImageId> ids;
  std::vector<Image> images;
  std::vector<LabelMap> labels;

  static LabeledSet from_manifest(const DatasetManifest& manifest);
  std::size_t size() const noexcept { return ids.size(); }
};

/// Positions into a dataset of `n` items used by optimizer step `step`: a
/// fresh seeded permutation per epoch, consumed `batch` items at a time.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n, std::size_t batch, std::uint64_t step);

struct StepStats {
  double loss_src = 0;  // summed source CE
  double loss_ce = 0;   // summed filtered CE on patches
  double loss_fl = 0;   // summed focal loss on patches (unweighted)
  double total = 0;     // normalized objective that was differentiated
  std::size_t contributing = 0;
};

/// One optimizer over the combined source + scale-invariance objective.
/// Each step draws its source batch from the step counter, so a run that
/// adds no adaptation signal follows the pure source-training trajectory.
class Trainer {
 public:
  Trainer(Checkpoint checkpoint, std::uint64_t seed, std::size_t source_batch);

  /// Source CE over the step's source batch plus the adaptation loss over
  /// `patches`, both summed and divided by the number of contributing pixels.
  StepStats step(const LabeledSet& source, std::span<const ScaleExample> patches, const LossConfig& loss);

  const ModelParams& params() const noexcept { return params_; }
  const OptimizerState& state() const noexcept { return state_; }
  void save(const std::filesystem::path& path) const { write_checkpoint(path, params_, state_); }

 private:
  ModelParams params_;
  OptimizerState state_;
  std::uint64_t seed_;
  std::size_t source_batch_;
};

/// Appends `round,step,loss_src,loss_ce,loss_fl,total` rows; pretraining uses round -1.
class LossLog {
 public:
  LossLog() = default;
  LossLog(const std::filesystem::path& path, bool append);

  void record(long round, std::size_t step, const StepStats& stats);

 private:
  std::ofstream out_;
};

/// Everything a run reads from disk. Target ground truth is only reachable
/// through `eval`, which is loaded from a separate evaluation manifest.
struct RunData {
  LabeledSet source;
  UnlabeledSet target;
  std::optional<LabeledSet> eval;
  std::size_t classes = kSceneClassCount;
  std::size_t height = 0;
  std::size_t width = 0;

  static RunData load(const RunConfig& cfg);
};

PatchConfig patch_config(const RunConfig& cfg, std::size_t height, std::size_t width);

Checkpoint initial_checkpoint(const RunConfig& cfg, std::size_t classes);

struct Evaluation {
  ConfusionMatrix confusion;
  EvalReport report;
};

Evaluation evaluate_model(const ModelParams& params, const LabeledSet& data);

/// Per-image class confidences of an unlabeled set under `params`.
ClassConfidenceTable score_set(const ModelParams& params, const UnlabeledSet& set, std::size_t classes);

struct RoundState {
  std::size_t round = 0;  // index of the next round to run
  double portion = 0;
  ThresholdVector thresholds;
  std::vector<ImageId> selected;
  std::filesystem::path checkpoint;
  std::vector<SelectionResult> history;
  std::vector<double> target_miou;  // eval-split mIoU after each finished round
};

/// Trains on the source domain only, writes <output_dir>/source/{model.lsec,
/// report_source.csv, report_target.csv, confusion_target.lst}, and returns
/// the checkpoint path.
std::filesystem::path train_source(const RunConfig& cfg, const RunData& data, LossLog& log);
std::filesystem::path train_source(const RunConfig& cfg);

/// One round: select confident target images and thresholds with the current
/// model, build scale-invariant examples, then optimize for steps_per_round.
/// Artifacts go to <output_dir>/round_<r>/.
RoundState adapt_round(const RoundState& state, const RunConfig& cfg, const RunData& data, LossLog& log);

struct RunSummary {
  std::optional<EvalReport> source_only;  // on the eval split
  std::optional<EvalReport> adapted;
  RoundState final_state;
};

/// Source training (unless run.init_checkpoint is set) followed by all rounds;
/// writes run.json, losses.csv, selection_history.csv, report.csv,
/// confusion.lst and summary.json under output_dir.
RunSummary run_adaptation(const RunConfig& cfg);

}  // namespace lse
