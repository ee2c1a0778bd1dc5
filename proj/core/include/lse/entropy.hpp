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
#include <optional>
#include <vector>

#include "lse/tensor.hpp"

namespace lse {

/// Per-class entropy cutoffs. Classes without a calibrated value are
/// resolved through `resolve`, which falls back to the mean of the valid
/// thresholds (or 0.5 when none are valid).
class ThresholdVector {
 public:
  ThresholdVector() = default;
  explicit ThresholdVector(std::size_t classes) : values_(classes) {}

  static ThresholdVector uniform(std::size_t classes, float value);

  std::size_t classes() const noexcept { return values_.size(); }
  void set(std::size_t c, float h);
  void invalidate(std::size_t c) { values_.at(c).reset(); }
  bool valid(std::size_t c) const { return values_.at(c).has_value(); }
  std::optional<float> get(std::size_t c) const { return values_.at(c); }

  float fallback() const;
  float resolve(std::size_t c) const;

 private:
  std::vector<std::optional<float>> values_;
};

/// Shannon entropy of every pixel's class distribution divided by ln(C),
/// with 0 * ln(0) taken as 0. Requires C >= 2.
template <typename Real>
EntropyMap self_entropy(const ProbVolumeT<Real>& probs);

/// Binary map that keeps a pixel when its entropy is at most the threshold of
/// its argmax class.
template <typename Real>
FilterMap filter_map(const ProbVolumeT<Real>& probs, const EntropyMap& entropy,
                     const ThresholdVector& thresholds);

}  // namespace lse
