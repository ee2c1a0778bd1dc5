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
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lse/model.hpp"
#include "lse/rng.hpp"
#include "lse/selection.hpp"
#include "lse/tensor.hpp"

namespace lse {

struct PatchConfig {
  std::size_t patches_per_image = 4;
  std::size_t patch_height = 0;
  std::size_t patch_width = 0;
  std::size_t output_height = 0;
  std::size_t output_width = 0;
  std::uint64_t seed = 0;

  /// Half-size patches zoomed back to full size (a 2x zoom).
  static PatchConfig half_scale(std::size_t height, std::size_t width, std::uint64_t seed = 0);

  /// Throws ConfigError unless patches fit a height x width image and the
  /// output matches the model input size.
  void validate(std::size_t height, std::size_t width) const;
};

/// A zoomed patch with labels and filter transferred from the full image.
struct ScaleExample {
  Image image;        // 3 x out_h x out_w
  LabelMap labels;    // out_h x out_w
  FilterMap filter;   // out_h x out_w
  ImageId source_id = 0;
  Rect rect;
};

/// `patches_per_image` rects of the configured size with offsets drawn
/// uniformly over all valid positions.
std::vector<Rect> sample_rects(std::size_t height, std::size_t width, const PatchConfig& cfg, Rng& rng);

/// Generator seed used for image `id` in adaptation round `round`.
std::uint64_t patch_seed(const PatchConfig& cfg, std::size_t round, ImageId id);

/// Image crop is resized bilinearly; probabilities are resized bilinearly,
/// renormalized and arg-maxed into pseudo-labels; the filter map is resized
/// with nearest sampling.
ScaleExample make_example(const Image& image, const ProbVolume& full_probs,
                          const FilterMap& full_filter, const Rect& rect, const PatchConfig& cfg);

/// All k examples for one selected image, sampled with patch_seed(cfg, round, id).
std::vector<ScaleExample> make_examples(ImageId id, const Image& image, const ProbVolume& full_probs,
                                        const FilterMap& full_filter, const PatchConfig& cfg,
                                        std::size_t round);

/// Fraction of patch pixels where the model's prediction on the zoomed
/// patch agrees with the label transferred from its full-image prediction.
double scale_consistency_score(const ModelParams& params, const Image& image,
                               std::span<const Rect> rects, const PatchConfig& cfg);

/// Persists examples as `example_<id>_<i>_{image,labels,filter}.lst` plus
/// `index.json` (rects and generator seeds) under `dir`.
void write_example_archive(const std::filesystem::path& dir, std::span<const ScaleExample> examples,
                           const PatchConfig& cfg, std::size_t round);

}  // namespace lse
