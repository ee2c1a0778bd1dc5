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

#include <cstdint>

#include "lse/tensor.hpp"

namespace lse {

enum class ResizeMode { kNearest, kBilinear };

/// Per-pixel softmax over the class axis of a C x H x W logit tensor,
/// computed with max subtraction. Throws ValueError naming the first pixel
/// holding a non-finite logit.
template <typename Real>
ProbVolumeT<Real> softmax(const Tensor<Real>& logits);

/// Index of the most probable class at every pixel; ties resolve to the
/// lowest class index.
template <typename Real>
LabelMap argmax_labels(const ProbVolumeT<Real>& probs);

/// Crops `rect` out of a rank-2 (H x W) or rank-3 (C x H x W) tensor and
/// resamples it to out_height x out_width. Bilinear sampling uses
/// half-pixel centers (align_corners = false) with clamped edges; nearest
/// sampling picks floor((j + 0.5) * in / out). No anti-aliasing is applied
/// when shrinking.
template <typename T>
Tensor<T> crop_resize(const Tensor<T>& src, const Rect& rect, std::size_t out_height,
                      std::size_t out_width, ResizeMode mode);

/// Rescales every pixel of a C x H x W volume so that it sums to one.
/// Pixels whose mass is zero become uniform.
template <typename Real>
void renormalize(ProbVolumeT<Real>& probs);

/// Throws ValueError unless `probs` is a valid probability volume within `tol`.
template <typename Real>
void check_prob_volume(const ProbVolumeT<Real>& probs, double tol = 1e-5);

/// Throws ValueError if a non-ignore label is >= classes.
void check_labels(const LabelMap& labels, std::size_t classes);

}  // namespace lse
