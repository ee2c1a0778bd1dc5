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
#include <span>
#include <vector>

#include "lse/scale_examples.hpp"
#include "lse/tensor.hpp"

namespace lse {

enum class Reduction { kSum, kMeanPerPixel };

struct LossConfig {
  double focal_gamma = 3.0;   // focusing exponent
  double focal_weight = 0.1;  // weight of the focal term in the adaptation loss
  bool focal_masked = false;  // apply the pseudo-label filter to the focal term too
  Reduction reduction = Reduction::kSum;

  void validate() const;
};

/// Scalar loss plus its gradient with respect to the logits that produced
/// `probs` (through the softmax). Non-contributing pixels get zero gradient.
template <typename Real>
struct LossValueT {
  double loss = 0;
  Tensor<Real> grad;
  std::size_t count = 0;
};

using LossValue = LossValueT<float>;

/// Cross-entropy summed over non-ignore pixels. Throws ValueError for labels >= C.
template <typename Real>
LossValueT<Real> ce_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                         Reduction reduction = Reduction::kSum);

/// Cross-entropy restricted to pixels where `filter` is 1.
template <typename Real>
LossValueT<Real> filtered_ce_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                                  const FilterMap& filter, Reduction reduction = Reduction::kSum);

/// -log(p_t) * (1 - p_t)^gamma at the target class. The filter only applies
/// when cfg.focal_masked is set.
template <typename Real>
LossValueT<Real> focal_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                            const FilterMap& filter, const LossConfig& cfg);

template <typename Real>
struct AdaptationLossT {
  double total = 0;
  double focal = 0;          // sum of unweighted focal terms
  double cross_entropy = 0;  // sum of filtered CE terms
  std::size_t count = 0;     // filtered pixels contributing to the CE term
  std::vector<Tensor<Real>> grads;  // one per example, w.r.t. its logits
};

/// Sum over examples of weight * focal + filtered CE.
template <typename Real>
AdaptationLossT<Real> adaptation_loss(std::span<const ScaleExample> examples,
                                      std::span<const ProbVolumeT<Real>> probs, const LossConfig& cfg);

}  // namespace lse
