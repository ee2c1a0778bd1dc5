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

#include "lse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "lse/tensor_ops.hpp"

namespace lse {
namespace {

constexpr double kLogFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

template <typename Real>
void check_inputs(const ProbVolumeT<Real>& probs, const LabelMap& labels, const FilterMap* filter) {
  if (probs.rank() != 3 || labels.dims() != Dims{probs.dim(1), probs.dim(2)}) {
    throw ShapeError("loss: probabilities " + dims_to_string(probs.dims()) + " and labels " +
                     dims_to_string(labels.dims()) + " disagree");
  }
  if (filter != nullptr && filter->dims() != labels.dims()) {
    throw ShapeError("loss: filter " + dims_to_string(filter->dims()) + " and labels " +
                     dims_to_string(labels.dims()) + " disagree");
  }
  check_labels(labels, probs.dim(0));
}

template <typename Real>
void reduce(LossValueT<Real>& v, Reduction reduction) {
  if (reduction != Reduction::kMeanPerPixel || v.count == 0) return;
  const double inv = 1.0 / static_cast<double>(v.count);
  v.loss *= inv;
  for (auto& g : v.grad.values()) g = static_cast<Real>(g * inv);
}

// Shared body of the plain and filtered cross-entropy.
template <typename Real>
LossValueT<Real> masked_ce(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                           const FilterMap* filter, Reduction reduction) {
  check_inputs(probs, labels, filter);
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = labels.size();
  LossValueT<Real> out;
  out.grad = Tensor<Real>(probs.dims());
  for (std::size_t px = 0; px < plane; ++px) {
    const std::uint8_t t = labels[px];
    if (t == kIgnoreLabel || (filter != nullptr && (*filter)[px] == 0)) continue;
    out.loss -= safe_log(probs[t * plane + px]);
    ++out.count;
    for (std::size_t c = 0; c < classes; ++c) out.grad[c * plane + px] = probs[c * plane + px];
    out.grad[t * plane + px] -= Real{1};
  }
  reduce(out, reduction);
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
  if (!(focal_weight >= 0.0)) throw ConfigError("focal_weight must be >= 0");
}

template <typename Real>
LossValueT<Real> ce_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels, Reduction reduction) {
  return masked_ce(probs, labels, nullptr, reduction);
}

template <typename Real>
LossValueT<Real> filtered_ce_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                                  const FilterMap& filter, Reduction reduction) {
  return masked_ce(probs, labels, &filter, reduction);
}

template <typename Real>
LossValueT<Real> focal_loss(const ProbVolumeT<Real>& probs, const LabelMap& labels,
                            const FilterMap& filter, const LossConfig& cfg) {
  cfg.validate();
  check_inputs(probs, labels, &filter);
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = labels.size();
  const double gamma = cfg.focal_gamma;
  LossValueT<Real> out;
  out.grad = Tensor<Real>(probs.dims());
  for (std::size_t px = 0; px < plane; ++px) {
    const std::uint8_t t = labels[px];
    if (t == kIgnoreLabel || (cfg.focal_masked && filter[px] == 0)) continue;
    ++out.count;
    const double pt = probs[t * plane + px];
    const double miss = 1.0 - pt;
    const double log_pt = safe_log(pt);
    out.loss -= log_pt * std::pow(miss, gamma);
    if (miss <= 0.0) continue;  // gradient vanishes at p_t = 1 for every gamma
    // dL/dz_j = a * (delta_tj - p_j) with a = p_t * dL/dp_t.
    double a = -std::pow(miss, gamma);
    if (gamma != 0.0) a += gamma * pt * std::pow(miss, gamma - 1.0) * log_pt;
    for (std::size_t c = 0; c < classes; ++c) {
      out.grad[c * plane + px] = static_cast<Real>(-a * probs[c * plane + px]);
    }
    out.grad[t * plane + px] = static_cast<Real>(a * (1.0 - pt));
  }
  reduce(out, cfg.reduction);
  return out;
}

template <typename Real>
AdaptationLossT<Real> adaptation_loss(std::span<const ScaleExample> examples,
                                      std::span<const ProbVolumeT<Real>> probs, const LossConfig& cfg) {
  cfg.validate();
  if (examples.size() != probs.size()) {
    throw ShapeError("adaptation_loss: " + std::to_string(examples.size()) + " examples but " +
                     std::to_string(probs.size()) + " model outputs");
  }
  AdaptationLossT<Real> out;
  if (examples.empty()) {
    spdlog::warn("adaptation_loss called with no scale-invariant examples; contributing zero");
    return out;
  }
  LossConfig summed = cfg;
  summed.reduction = Reduction::kSum;
  out.grads.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto fl = focal_loss(probs[i], examples[i].labels, examples[i].filter, summed);
    auto ce = filtered_ce_loss(probs[i], examples[i].labels, examples[i].filter);
    out.focal += fl.loss;
    out.cross_entropy += ce.loss;
    out.total += cfg.focal_weight * fl.loss + ce.loss;
    out.count += ce.count;
    if (cfg.focal_weight != 0.0) {
      for (std::size_t k = 0; k < ce.grad.size(); ++k) {
        ce.grad[k] = static_cast<Real>(ce.grad[k] + cfg.focal_weight * fl.grad[k]);
      }
    }
    out.grads.push_back(std::move(ce.grad));
  }
  return out;
}

template LossValueT<float> ce_loss(const ProbVolumeT<float>&, const LabelMap&, Reduction);
template LossValueT<double> ce_loss(const ProbVolumeT<double>&, const LabelMap&, Reduction);
template LossValueT<float> filtered_ce_loss(const ProbVolumeT<float>&, const LabelMap&, const FilterMap&, Reduction);
template LossValueT<double> filtered_ce_loss(const ProbVolumeT<double>&, const LabelMap&, const FilterMap&, Reduction);
template LossValueT<float> focal_loss(const ProbVolumeT<float>&, const LabelMap&, const FilterMap&, const LossConfig&);
template LossValueT<double> focal_loss(const ProbVolumeT<double>&, const LabelMap&, const FilterMap&, const LossConfig&);
template AdaptationLossT<float> adaptation_loss(std::span<const ScaleExample>, std::span<const ProbVolumeT<float>>,
                                                const LossConfig&);
template AdaptationLossT<double> adaptation_loss(std::span<const ScaleExample>, std::span<const ProbVolumeT<double>>,
                                                 const LossConfig&);

}  // namespace lse
