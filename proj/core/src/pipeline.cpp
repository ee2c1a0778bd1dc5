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

#include "lse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "lse/entropy.hpp"
#include "lse/parallel.hpp"
#include "lse/rng.hpp"
#include "lse/tensor_io.hpp"
#include "lse/tensor_ops.hpp"
#include "lse/version.hpp"

namespace lse {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;    // "init"
constexpr std::uint64_t kSourceStream = 0x737263;    // "src"
constexpr std::uint64_t kPoolStream = 0x706f6f6c;    // "pool"
constexpr std::uint64_t kPatchStream = 0x70617463;   // "patc"

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint64_t source_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {kSourceStream}); }

void apply_optim(const RunConfig& cfg, OptimizerState& state) {
  state.learning_rate = cfg.learning_rate;
  state.beta1 = cfg.beta1;
  state.beta2 = cfg.beta2;
  state.epsilon = cfg.epsilon;
}

FilterMap make_filter(const ProbVolume& probs, const ThresholdVector& thresholds, FilterMode mode) {
  const std::size_t h = probs.dim(1);
  const std::size_t w = probs.dim(2);
  switch (mode) {
    case FilterMode::kAll: return FilterMap({h, w}, 1);
    case FilterMode::kNone: return FilterMap({h, w}, 0);
    case FilterMode::kDynamic: break;
  }
  return filter_map(probs, self_entropy(probs), thresholds);
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json iou = nlohmann::json::array();
  for (const auto& v : r.iou) iou.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"iou", iou}, {"miou", r.miou}, {"pixel_accuracy", r.pixel_accuracy}, {"images", r.images}};
}

void write_evaluation(const std::filesystem::path& report_csv, const std::filesystem::path& confusion_lst,
                      const Evaluation& eval) {
  write_report_csv(report_csv, eval.report);
  write_tensor(confusion_lst, eval.confusion.to_tensor());
}

}  // namespace

LabeledSet LabeledSet::from_manifest(const DatasetManifest& manifest) {
  LabeledSet set;
  for (const auto& item : manifest.items) {
    set.ids.push_back(item.id);
    set.images.push_back(read_tensor_as<float>(manifest.image_path(item)));
    set.labels.push_back(read_tensor_as<std::uint8_t>(manifest.label_path(item)));
    const auto [h, w] = spatial_dims(set.images.back());
    if (set.labels.back().dims() != Dims{h, w}) {
      throw ShapeError("labels of item " + std::to_string(item.id) + " do not match its image");
    }
  }
  return set;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n, std::size_t batch, std::uint64_t step) {
  std::vector<std::size_t> out;
  if (n == 0 || batch == 0) return out;
  out.reserve(batch);
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < batch; ++j) {
    const std::uint64_t pos = step * batch + j;
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(seed, {epoch}));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

Trainer::Trainer(Checkpoint checkpoint, std::uint64_t seed, std::size_t source_batch)
    : params_(std::move(checkpoint.params)),
      state_(std::move(checkpoint.state)),
      seed_(seed),
      source_batch_(source_batch) {}

StepStats Trainer::step(const LabeledSet& source, std::span<const ScaleExample> patches, const LossConfig& loss) {
  const auto src = batch_indices(seed_, source.size(), source_batch_, state_.step);
  const std::size_t ns = src.size();
  const std::size_t n = ns + patches.size();
  if (n == 0) throw ValueError("training step has neither source images nor patches");

  std::vector<ForwardResult<float>> fwd(n);
  std::vector<ProbVolume> probs(n);
  try {
    parallel_for(n, [&](std::size_t i) {
      const Image& x = i < ns ? source.images[src[i]] : patches[i - ns].image;
      fwd[i] = forward(params_, x);
      probs[i] = softmax(fwd[i].logits);
    });
  } catch (const ValueError& e) {
    throw Error("training diverged at optimizer step " + std::to_string(state_.step) + ": " + e.what());
  }

  StepStats stats;
  std::vector<Tensor<float>> grads(n);
  for (std::size_t i = 0; i < ns; ++i) {
    auto ce = ce_loss(probs[i], source.labels[src[i]]);
    stats.loss_src += ce.loss;
    stats.contributing += ce.count;
    grads[i] = std::move(ce.grad);
  }
  double adapt_total = 0;
  if (!patches.empty()) {
    auto adapt = adaptation_loss<float>(patches, std::span<const ProbVolume>(probs).subspan(ns), loss);
    stats.loss_ce = adapt.cross_entropy;
    stats.loss_fl = adapt.focal;
    stats.contributing += adapt.count;
    adapt_total = adapt.total;
    for (std::size_t i = 0; i < patches.size(); ++i) grads[ns + i] = std::move(adapt.grads[i]);
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, stats.contributing));
  stats.total = (stats.loss_src + adapt_total) / denom;
  if (!std::isfinite(stats.total)) {
    throw Error("training diverged at optimizer step " + std::to_string(state_.step) + ": non-finite loss");
  }

  const auto scale = static_cast<float>(1.0 / denom);
  std::vector<ModelParams> param_grads(n);
  parallel_for(n, [&](std::size_t i) {
    for (auto& g : grads[i].values()) g *= scale;
    param_grads[i] = backward(params_, fwd[i].cache, grads[i]);
  });
  ModelParams total = ModelParams::zeros(params_.classes());
  for (const auto& g : param_grads) accumulate_grads(total, g);
  adam_step(params_, total, state_);
  return stats;
}

LossLog::LossLog(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw IoError("cannot open loss log " + path.string());
  out_.precision(9);
  if (!append) out_ << "round,step,loss_src,loss_ce,loss_fl,total\n";
}

void LossLog::record(long round, std::size_t step, const StepStats& s) {
  if (!out_.is_open()) return;
  out_ << round << ',' << step << ',' << s.loss_src << ',' << s.loss_ce << ',' << s.loss_fl << ',' << s.total << '\n';
}

RunData RunData::load(const RunConfig& cfg) {
  RunData data;
  const DatasetManifest source = read_manifest(cfg.source_manifest);
  if (source.domain != "source") {
    throw ConfigError("data.source_manifest is tagged '" + source.domain + "', expected 'source'");
  }
  data.source = LabeledSet::from_manifest(source);
  if (data.source.size() == 0) throw ConfigError("source manifest is empty");
  data.target = UnlabeledSet::from_manifest(read_manifest(cfg.target_manifest));
  if (!cfg.eval_manifest.empty()) data.eval = LabeledSet::from_manifest(read_manifest(cfg.eval_manifest));

  std::tie(data.height, data.width) = spatial_dims(data.source.images.front());
  const auto check = [&](const Image& img, const char* which) {
    if (img.dims() != Dims{3, data.height, data.width}) {
      throw ShapeError(std::string(which) + " image has dims " + dims_to_string(img.dims()) +
                       ", expected " + dims_to_string({3, data.height, data.width}));
    }
  };
  for (const auto& img : data.source.images) check(img, "source");
  for (const auto id : data.target.ids()) check(data.target.image(id), "target");
  for (std::size_t i = 0; i < data.source.size(); ++i) check_labels(data.source.labels[i], data.classes);
  if (data.eval) {
    for (const auto& img : data.eval->images) check(img, "evaluation");
  }
  return data;
}

PatchConfig patch_config(const RunConfig& cfg, std::size_t height, std::size_t width) {
  PatchConfig p = PatchConfig::half_scale(height, width, derive_seed(cfg.seed, {kPatchStream}));
  p.patches_per_image = cfg.patches_per_image;
  if (cfg.patch_height != 0) p.patch_height = cfg.patch_height;
  if (cfg.patch_width != 0) p.patch_width = cfg.patch_width;
  if (cfg.output_height != 0) p.output_height = cfg.output_height;
  if (cfg.output_width != 0) p.output_width = cfg.output_width;
  p.validate(height, width);
  return p;
}

Checkpoint initial_checkpoint(const RunConfig& cfg, std::size_t classes) {
  Checkpoint ck;
  ck.params = ModelParams::he_uniform(classes, derive_seed(cfg.seed, {kInitStream}));
  ck.state = OptimizerState::for_params(ck.params);
  apply_optim(cfg, ck.state);
  return ck;
}

Evaluation evaluate_model(const ModelParams& params, const LabeledSet& data) {
  const std::size_t classes = params.classes();
  std::vector<ConfusionMatrix> partial(data.size(), ConfusionMatrix(classes));
  parallel_for(data.size(), [&](std::size_t i) {
    partial[i].accumulate(argmax_labels(softmax(predict_logits(params, data.images[i]))), data.labels[i]);
  });
  ConfusionMatrix cm(classes);
  for (const auto& p : partial) cm.merge(p);
  return {cm, miou(cm, data.size())};
}

ClassConfidenceTable score_set(const ModelParams& params, const UnlabeledSet& set, std::size_t classes) {
  std::vector<ClassConfidence> scores(set.size());
  parallel_for(set.size(), [&](std::size_t i) {
    scores[i] = score_image(softmax(predict_logits(params, set.image(set.ids()[i]))));
  });
  ClassConfidenceTable table(classes);
  for (std::size_t i = 0; i < set.size(); ++i) table.add(set.ids()[i], std::move(scores[i]));
  return table;
}

std::filesystem::path train_source(const RunConfig& cfg, const RunData& data, LossLog& log) {
  const std::filesystem::path dir = cfg.output_dir / "source";
  ensure_dir(dir);
  Trainer trainer(initial_checkpoint(cfg, data.classes), source_seed(cfg), cfg.source_images_per_step);
  const LossConfig loss = cfg.loss();
  for (std::size_t s = 0; s < cfg.source_steps; ++s) {
    const StepStats stats = trainer.step(data.source, {}, loss);
    log.record(-1, s, stats);
  }
  const auto checkpoint = dir / "model.lsec";
  trainer.save(checkpoint);

  const Evaluation on_source = evaluate_model(trainer.params(), data.source);
  write_evaluation(dir / "report_source.csv", dir / "confusion_source.lst", on_source);
  spdlog::info("source training: {} steps, source mIoU {:.4f}", cfg.source_steps, on_source.report.miou);
  if (data.eval) {
    const Evaluation on_target = evaluate_model(trainer.params(), *data.eval);
    write_evaluation(dir / "report_target.csv", dir / "confusion_target.lst", on_target);
    spdlog::info("source-only target mIoU {:.4f}", on_target.report.miou);
  }
  return checkpoint;
}

std::filesystem::path train_source(const RunConfig& cfg) {
  cfg.validate(true);
  const RunData data = RunData::load(cfg);
  ensure_dir(cfg.output_dir);
  LossLog log(cfg.output_dir / "losses.csv", false);
  return train_source(cfg, data, log);
}

RoundState adapt_round(const RoundState& state, const RunConfig& cfg, const RunData& data, LossLog& log) {
  const std::size_t round = state.round;
  const std::filesystem::path dir = cfg.output_dir / ("round_" + std::to_string(round));
  ensure_dir(dir);
  Checkpoint ck = read_checkpoint(state.checkpoint);
  apply_optim(cfg, ck.state);
  if (ck.params.classes() != data.classes) throw ConfigError("checkpoint class count does not match the data");
  const PatchConfig patches = patch_config(cfg, data.height, data.width);

  // (a) class-based selection and threshold calibration with the current model.
  if (data.target.empty()) throw Error("round " + std::to_string(round) + ": the target set is empty");
  const ModelParams& current = ck.params;
  const ClassConfidenceTable table = score_set(current, data.target, data.classes);
  const ProbSource probs_of = [&](ImageId id) { return softmax(predict_logits(current, data.target.image(id))); };
  SelectionResult selection = select_images(table, cfg.selection(data.classes, round), probs_of);
  if (selection.selected.empty()) {
    throw Error("round " + std::to_string(round) + ": class-based selection returned no images");
  }

  // (b) scale-invariant examples with labels and filters from the full image.
  std::vector<std::vector<ScaleExample>> per_image(selection.selected.size());
  parallel_for(selection.selected.size(), [&](std::size_t i) {
    const ImageId id = selection.selected[i];
    const Image& image = data.target.image(id);
    const ProbVolume probs = probs_of(id);
    const FilterMap filter = make_filter(probs, selection.thresholds, cfg.filter);
    per_image[i] = make_examples(id, image, probs, filter, patches, round);
  });
  std::vector<ScaleExample> pool;
  for (auto& v : per_image) {
    for (auto& ex : v) pool.push_back(std::move(ex));
  }
  std::size_t kept = 0;
  std::size_t pixels = 0;
  for (const auto& ex : pool) {
    kept += static_cast<std::size_t>(std::count(ex.filter.values().begin(), ex.filter.values().end(), 1));
    pixels += ex.filter.size();
  }
  spdlog::info("round {}: p={:.2f}, {} images selected, {} examples, {:.1f}% pixels pass the filter", round,
               selection.portion, selection.selected.size(), pool.size(),
               pixels ? 100.0 * static_cast<double>(kept) / static_cast<double>(pixels) : 0.0);

  // (c) optimize source CE + adaptation loss.
  Trainer trainer(std::move(ck), source_seed(cfg), cfg.source_images_per_step);
  const LossConfig loss = cfg.loss();
  const std::size_t per_step = cfg.target_images_per_step * patches.patches_per_image;
  const std::uint64_t pool_seed = derive_seed(cfg.seed, {kPoolStream, round});
  std::vector<ScaleExample> batch;
  for (std::size_t s = 0; s < cfg.steps_per_round; ++s) {
    batch.clear();
    for (std::size_t idx : batch_indices(pool_seed, pool.size(), per_step, s)) batch.push_back(pool[idx]);
    log.record(static_cast<long>(round), s, trainer.step(data.source, batch, loss));
  }

  RoundState next = state;
  next.round = round + 1;
  next.portion = selection.portion;
  next.thresholds = selection.thresholds;
  next.selected = selection.selected;
  next.checkpoint = dir / "model.lsec";
  trainer.save(next.checkpoint);
  write_json(dir / "selection.json", to_json(selection));
  if (cfg.write_archives) write_example_archive(dir / "archive", pool, patches, round);
  if (data.eval) {
    const Evaluation eval = evaluate_model(trainer.params(), *data.eval);
    write_report_csv(dir / "report.csv", eval.report);
    next.target_miou.push_back(eval.report.miou);
    spdlog::info("round {}: target mIoU {:.4f}", round, eval.report.miou);
  }
  next.history.push_back(std::move(selection));
  return next;
}

RunSummary run_adaptation(const RunConfig& cfg) {
  cfg.validate(true);
  const RunData data = RunData::load(cfg);
  ensure_dir(cfg.output_dir);
  write_json(cfg.output_dir / "run.json",
             {{"config", cfg.to_json()},
              {"versions", {{"lse", kVersion}, {"lst_format", kTensorVersion}, {"lsec_format", 1}}}});
  LossLog log(cfg.output_dir / "losses.csv", false);

  RunSummary summary;
  RoundState state;
  state.checkpoint = cfg.init_checkpoint.empty() ? train_source(cfg, data, log) : cfg.init_checkpoint;
  if (data.eval) summary.source_only = evaluate_model(read_checkpoint(state.checkpoint).params, *data.eval).report;

  for (std::size_t r = 0; r < cfg.rounds; ++r) state = adapt_round(state, cfg, data, log);

  write_selection_history_csv(cfg.output_dir / "selection_history.csv", {cfg.history_label(), state.history});
  nlohmann::json doc = {{"rounds", cfg.rounds}, {"label", cfg.history_label()}};
  if (data.eval) {
    const Evaluation final_eval = evaluate_model(read_checkpoint(state.checkpoint).params, *data.eval);
    write_evaluation(cfg.output_dir / "report.csv", cfg.output_dir / "confusion.lst", final_eval);
    summary.adapted = final_eval.report;
    doc["source_only"] = report_json(*summary.source_only);
    doc["adapted"] = report_json(final_eval.report);
    doc["target_miou_per_round"] = state.target_miou;
  }
  write_json(cfg.output_dir / "summary.json", doc);
  summary.final_state = std::move(state);
  return summary;
}

}  // namespace lse
