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

#include "lse/scale_examples.hpp"

#include <fstream>
#include <map>
#include <random>
#include <string>

#include "lse/tensor_io.hpp"
#include "lse/tensor_ops.hpp"

namespace lse {

PatchConfig PatchConfig::half_scale(std::size_t height, std::size_t width, std::uint64_t seed) {
  PatchConfig cfg;
  cfg.patch_height = height / 2;
  cfg.patch_width = width / 2;
  cfg.output_height = height;
  cfg.output_width = width;
  cfg.seed = seed;
  return cfg;
}

void PatchConfig::validate(std::size_t height, std::size_t width) const {
  if (patches_per_image == 0) throw ConfigError("patches_per_image must be at least 1");
  if (patch_height < 2 || patch_width < 2) throw ConfigError("patches must be at least 2x2");
  if (patch_height > height || patch_width > width) {
    throw ConfigError("patch " + std::to_string(patch_height) + "x" + std::to_string(patch_width) +
                      " is larger than the " + std::to_string(height) + "x" + std::to_string(width) +
                      " image");
  }
  if (output_height != height || output_width != width) {
    throw ConfigError("patch output size must equal the model input size");
  }
}

std::vector<Rect> sample_rects(std::size_t height, std::size_t width, const PatchConfig& cfg, Rng& rng) {
  if (cfg.patch_height > height || cfg.patch_width > width) {
    throw ShapeError("patch " + std::to_string(cfg.patch_height) + "x" + std::to_string(cfg.patch_width) +
                     " does not fit a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  std::uniform_int_distribution<std::size_t> rows(0, height - cfg.patch_height);
  std::uniform_int_distribution<std::size_t> cols(0, width - cfg.patch_width);
  std::vector<Rect> out;
  out.reserve(cfg.patches_per_image);
  for (std::size_t i = 0; i < cfg.patches_per_image; ++i) {
    const std::size_t r = rows(rng);
    const std::size_t c = cols(rng);
    out.push_back({r, c, cfg.patch_height, cfg.patch_width});
  }
  return out;
}

std::uint64_t patch_seed(const PatchConfig& cfg, std::size_t round, ImageId id) {
  return derive_seed(cfg.seed, {0x70617463ull, round, id});
}

ScaleExample make_example(const Image& image, const ProbVolume& full_probs,
                          const FilterMap& full_filter, const Rect& rect, const PatchConfig& cfg) {
  const auto [h, w] = spatial_dims(image);
  if (spatial_dims(full_probs) != std::pair{h, w} || full_filter.dims() != Dims{h, w}) {
    throw ShapeError("make_example: image, probabilities and filter disagree in size");
  }
  ScaleExample ex;
  ex.rect = rect;
  ex.image = crop_resize(image, rect, cfg.output_height, cfg.output_width, ResizeMode::kBilinear);
  ProbVolume zoomed = crop_resize(full_probs, rect, cfg.output_height, cfg.output_width, ResizeMode::kBilinear);
  renormalize(zoomed);
  ex.labels = argmax_labels(zoomed);
  ex.filter = crop_resize(full_filter, rect, cfg.output_height, cfg.output_width, ResizeMode::kNearest);
  return ex;
}

std::vector<ScaleExample> make_examples(ImageId id, const Image& image, const ProbVolume& full_probs,
                                        const FilterMap& full_filter, const PatchConfig& cfg,
                                        std::size_t round) {
  const auto [h, w] = spatial_dims(image);
  Rng rng(patch_seed(cfg, round, id));
  std::vector<ScaleExample> out;
  for (const Rect& rect : sample_rects(h, w, cfg, rng)) {
    out.push_back(make_example(image, full_probs, full_filter, rect, cfg));
    out.back().source_id = id;
  }
  return out;
}

double scale_consistency_score(const ModelParams& params, const Image& image,
                               std::span<const Rect> rects, const PatchConfig& cfg) {
  if (rects.empty()) return 1.0;
  const ProbVolume full = softmax(predict_logits(params, image));
  std::size_t agree = 0;
  std::size_t total = 0;
  for (const Rect& rect : rects) {
    ProbVolume zoomed = crop_resize(full, rect, cfg.output_height, cfg.output_width, ResizeMode::kBilinear);
    renormalize(zoomed);
    const LabelMap transferred = argmax_labels(zoomed);
    const Image patch = crop_resize(image, rect, cfg.output_height, cfg.output_width, ResizeMode::kBilinear);
    const LabelMap predicted = argmax_labels(softmax(predict_logits(params, patch)));
    for (std::size_t i = 0; i < predicted.size(); ++i) agree += predicted[i] == transferred[i] ? 1 : 0;
    total += predicted.size();
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

void write_example_archive(const std::filesystem::path& dir, std::span<const ScaleExample> examples,
                           const PatchConfig& cfg, std::size_t round) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json items = nlohmann::json::array();
  std::map<ImageId, std::size_t> next_index;
  for (const ScaleExample& ex : examples) {
    const std::size_t i = next_index[ex.source_id]++;
    const std::string stem = "example_" + std::to_string(ex.source_id) + "_" + std::to_string(i);
    write_tensor(dir / (stem + "_image.lst"), ex.image);
    write_tensor(dir / (stem + "_labels.lst"), ex.labels);
    write_tensor(dir / (stem + "_filter.lst"), ex.filter);
    items.push_back({{"id", ex.source_id},
                     {"index", i},
                     {"seed", patch_seed(cfg, round, ex.source_id)},
                     {"rect", {{"row", ex.rect.row}, {"col", ex.rect.col},
                               {"height", ex.rect.height}, {"width", ex.rect.width}}},
                     {"image", stem + "_image.lst"},
                     {"labels", stem + "_labels.lst"},
                     {"filter", stem + "_filter.lst"}});
  }
  const nlohmann::json index = {{"round", round},
                                {"patches_per_image", cfg.patches_per_image},
                                {"output", {cfg.output_height, cfg.output_width}},
                                {"examples", items}};
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

}  // namespace lse
