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

#include "lse/entropy.hpp"

#include <cmath>

#include "lse/tensor_ops.hpp"

namespace lse {

ThresholdVector ThresholdVector::uniform(std::size_t classes, float value) {
  ThresholdVector h(classes);
  for (std::size_t c = 0; c < classes; ++c) h.set(c, value);
  return h;
}

void ThresholdVector::set(std::size_t c, float h) {
  if (!(h >= 0.0f && h <= 1.0f)) throw ValueError("entropy threshold must lie in [0, 1]");
  values_.at(c) = h;
}

float ThresholdVector::fallback() const {
  double total = 0;
  std::size_t n = 0;
  for (const auto& v : values_) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  return n == 0 ? 0.5f : static_cast<float>(total / static_cast<double>(n));
}

float ThresholdVector::resolve(std::size_t c) const {
  const auto& v = values_.at(c);
  return v ? *v : fallback();
}

template <typename Real>
EntropyMap self_entropy(const ProbVolumeT<Real>& probs) {
  if (probs.rank() != 3) throw ShapeError("entropy expects a C x H x W volume");
  const std::size_t classes = probs.dim(0);
  if (classes < 2) throw ValueError("normalized entropy needs at least two classes");
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  const double norm = std::log(static_cast<double>(classes));
  EntropyMap out({probs.dim(1), probs.dim(2)});
  for (std::size_t px = 0; px < plane; ++px) {
    double e = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = probs[c * plane + px];
      if (p > 0) e -= p * std::log(p);
    }
    out[px] = static_cast<float>(std::clamp(e / norm, 0.0, 1.0));
  }
  return out;
}

template <typename Real>
FilterMap filter_map(const ProbVolumeT<Real>& probs, const EntropyMap& entropy,
                     const ThresholdVector& thresholds) {
  if (probs.rank() != 3 || entropy.rank() != 2 || probs.dim(1) != entropy.dim(0) ||
      probs.dim(2) != entropy.dim(1)) {
    throw ShapeError("filter_map: probability volume " + dims_to_string(probs.dims()) +
                     " and entropy map " + dims_to_string(entropy.dims()) + " disagree");
  }
  if (thresholds.classes() != probs.dim(0)) {
    throw ShapeError("filter_map: threshold vector has " + std::to_string(thresholds.classes()) +
                     " classes, volume has " + std::to_string(probs.dim(0)));
  }
  std::vector<float> resolved(thresholds.classes());
  for (std::size_t c = 0; c < resolved.size(); ++c) resolved[c] = thresholds.resolve(c);

  const LabelMap labels = argmax_labels(probs);
  FilterMap out(entropy.dims());
  for (std::size_t px = 0; px < out.size(); ++px) {
    out[px] = entropy[px] <= resolved[labels[px]] ? 1 : 0;
  }
  return out;
}

template EntropyMap self_entropy(const ProbVolumeT<float>&);
template EntropyMap self_entropy(const ProbVolumeT<double>&);
template FilterMap filter_map(const ProbVolumeT<float>&, const EntropyMap&, const ThresholdVector&);
template FilterMap filter_map(const ProbVolumeT<double>&, const EntropyMap&, const ThresholdVector&);

}  // namespace lse
