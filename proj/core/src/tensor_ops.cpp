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

#include "lse/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

namespace lse {

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

void check_rect(const Rect& rect, std::size_t height, std::size_t width) {
  if (rect.height < 2 || rect.width < 2 || rect.row + rect.height > height ||
      rect.col + rect.width > width) {
    std::ostringstream os;
    os << "rect (r=" << rect.row << ", c=" << rect.col << ", h=" << rect.height
       << ", w=" << rect.width << ") is invalid for a " << height << "x" << width << " raster";
    throw ShapeError(os.str());
  }
}

template <typename Real>
ProbVolumeT<Real> softmax(const Tensor<Real>& logits) {
  if (logits.rank() != 3) {
    throw ShapeError("softmax expects C x H x W logits, got " + dims_to_string(logits.dims()));
  }
  const std::size_t classes = logits.dim(0);
  const std::size_t plane = logits.dim(1) * logits.dim(2);
  ProbVolumeT<Real> out(logits.dims());
  const Real* in = logits.data();
  Real* dst = out.data();
  for (std::size_t px = 0; px < plane; ++px) {
    Real peak = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      const Real v = in[c * plane + px];
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite logit at pixel " << px << " (row " << px / logits.dim(2) << ", col "
           << px % logits.dim(2) << "), class " << c;
        throw ValueError(os.str());
      }
      peak = std::max(peak, v);
    }
    Real total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const Real e = std::exp(in[c * plane + px] - peak);
      dst[c * plane + px] = e;
      total += e;
    }
    const Real inv = Real{1} / total;
    for (std::size_t c = 0; c < classes; ++c) dst[c * plane + px] *= inv;
  }
  return out;
}

template <typename Real>
LabelMap argmax_labels(const ProbVolumeT<Real>& probs) {
  if (probs.rank() != 3) {
    throw ShapeError("argmax expects C x H x W, got " + dims_to_string(probs.dims()));
  }
  if (probs.dim(0) >= kIgnoreLabel) throw ShapeError("too many classes for a LabelMap");
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  LabelMap out({probs.dim(1), probs.dim(2)});
  const Real* p = probs.data();
  for (std::size_t px = 0; px < plane; ++px) {
    std::size_t best = 0;
    Real best_value = p[px];
    for (std::size_t c = 1; c < classes; ++c) {
      if (p[c * plane + px] > best_value) {
        best_value = p[c * plane + px];
        best = c;
      }
    }
    out[px] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;  // weight of `hi`
};

// Half-pixel-center sample positions along one axis, clamped to the source.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t j = 0; j < out; ++j) {
    double src = (static_cast<double>(j) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[j] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

std::vector<std::size_t> nearest_taps(std::size_t in, std::size_t out) {
  std::vector<std::size_t> taps(out);
  for (std::size_t j = 0; j < out; ++j) {
    taps[j] = std::min((2 * j + 1) * in / (2 * out), in - 1);
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> crop_resize(const Tensor<T>& src, const Rect& rect, std::size_t out_height,
                      std::size_t out_width, ResizeMode mode) {
  const auto [height, width] = spatial_dims(src);
  check_rect(rect, height, width);
  if (out_height == 0 || out_width == 0) throw ShapeError("crop_resize output extent is zero");
  const std::size_t channels = src.rank() == 3 ? src.dim(0) : 1;
  Dims out_dims = src.rank() == 3 ? Dims{channels, out_height, out_width}
                                  : Dims{out_height, out_width};
  Tensor<T> out(out_dims);
  const std::size_t in_plane = height * width;
  const std::size_t out_plane = out_height * out_width;

  if (mode == ResizeMode::kNearest) {
    const auto rows = nearest_taps(rect.height, out_height);
    const auto cols = nearest_taps(rect.width, out_width);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* in = src.data() + c * in_plane;
      T* dst = out.data() + c * out_plane;
      for (std::size_t i = 0; i < out_height; ++i) {
        const T* row = in + (rect.row + rows[i]) * width + rect.col;
        for (std::size_t j = 0; j < out_width; ++j) dst[i * out_width + j] = row[cols[j]];
      }
    }
    return out;
  }

  const auto rows = bilinear_taps(rect.height, out_height);
  const auto cols = bilinear_taps(rect.width, out_width);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* in = src.data() + c * in_plane;
    T* dst = out.data() + c * out_plane;
    for (std::size_t i = 0; i < out_height; ++i) {
      const T* top = in + (rect.row + rows[i].lo) * width + rect.col;
      const T* bottom = in + (rect.row + rows[i].hi) * width + rect.col;
      for (std::size_t j = 0; j < out_width; ++j) {
        const Tap& tc = cols[j];
        const double upper = static_cast<double>(top[tc.lo]) +
                             (static_cast<double>(top[tc.hi]) - static_cast<double>(top[tc.lo])) * tc.frac;
        const double lower = static_cast<double>(bottom[tc.lo]) +
                             (static_cast<double>(bottom[tc.hi]) - static_cast<double>(bottom[tc.lo])) * tc.frac;
        const double v = upper + (lower - upper) * rows[i].frac;
        if constexpr (std::is_integral_v<T>) {
          dst[i * out_width + j] = static_cast<T>(std::lround(v));
        } else {
          dst[i * out_width + j] = static_cast<T>(v);
        }
      }
    }
  }
  return out;
}

template <typename Real>
void renormalize(ProbVolumeT<Real>& probs) {
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  Real* p = probs.data();
  for (std::size_t px = 0; px < plane; ++px) {
    Real total = 0;
    for (std::size_t c = 0; c < classes; ++c) total += p[c * plane + px];
    if (total > Real{0}) {
      for (std::size_t c = 0; c < classes; ++c) p[c * plane + px] /= total;
    } else {
      for (std::size_t c = 0; c < classes; ++c) p[c * plane + px] = Real{1} / static_cast<Real>(classes);
    }
  }
}

template <typename Real>
void check_prob_volume(const ProbVolumeT<Real>& probs, double tol) {
  if (probs.rank() != 3) {
    throw ShapeError("probability volume must be C x H x W, got " + dims_to_string(probs.dims()));
  }
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  for (std::size_t px = 0; px < plane; ++px) {
    double total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = probs[c * plane + px];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValueError("probability out of [0,1] at pixel " + std::to_string(px));
      }
      total += v;
    }
    if (std::abs(total - 1.0) > tol) {
      throw ValueError("probabilities at pixel " + std::to_string(px) + " sum to " +
                       std::to_string(total));
    }
  }
}

void check_labels(const LabelMap& labels, std::size_t classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t v = labels[i];
    if (v != kIgnoreLabel && v >= classes) {
      throw ValueError("label " + std::to_string(v) + " at pixel " + std::to_string(i) +
                       " is not below class count " + std::to_string(classes));
    }
  }
}

template ProbVolumeT<float> softmax(const Tensor<float>&);
template ProbVolumeT<double> softmax(const Tensor<double>&);
template LabelMap argmax_labels(const ProbVolumeT<float>&);
template LabelMap argmax_labels(const ProbVolumeT<double>&);
template Tensor<float> crop_resize(const Tensor<float>&, const Rect&, std::size_t, std::size_t, ResizeMode);
template Tensor<double> crop_resize(const Tensor<double>&, const Rect&, std::size_t, std::size_t, ResizeMode);
template Tensor<std::uint8_t> crop_resize(const Tensor<std::uint8_t>&, const Rect&, std::size_t,
                                          std::size_t, ResizeMode);
template void renormalize(ProbVolumeT<float>&);
template void renormalize(ProbVolumeT<double>&);
template void check_prob_volume(const ProbVolumeT<float>&, double);
template void check_prob_volume(const ProbVolumeT<double>&, double);

}  // namespace lse
