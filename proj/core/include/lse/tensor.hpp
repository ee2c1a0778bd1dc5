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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lse/error.hpp"

namespace lse {

using Dims = std::vector<std::size_t>;

inline std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string dims_to_string(const Dims& dims);

/// Dense row-major array. A default-constructed tensor is an empty placeholder;
/// every other tensor has at least one dimension and no zero extents.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Dims dims, T fill = T{}) : dims_(std::move(dims)) {
    check_dims();
    data_.assign(element_count(dims_), fill);
  }

  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (element_count(dims_) != data_.size()) {
      throw ShapeError("tensor dims " + dims_to_string(dims_) + " do not match " +
                       std::to_string(data_.size()) + " values");
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Row-major element access; no bounds checks.
  T& at(std::size_t i, std::size_t j) noexcept { return data_[i * dims_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const noexcept { return data_[i * dims_[1] + j]; }
  T& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }
  const T& at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }

  /// Contiguous slice along the outermost axis.
  std::span<T> slice(std::size_t outer) noexcept {
    const std::size_t stride = data_.size() / dims_[0];
    return {data_.data() + outer * stride, stride};
  }
  std::span<const T> slice(std::size_t outer) const noexcept {
    const std::size_t stride = data_.size() / dims_[0];
    return {data_.data() + outer * stride, stride};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    if (dims_.empty()) throw ShapeError("tensor needs at least one dimension");
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("tensor extent must be >= 1, got " + dims_to_string(dims_));
    }
  }

  Dims dims_;
  std::vector<T> data_;
};

/// Channel-major image (3 x H x W), values in [0, 1].
template <typename Real>
using ImageT = Tensor<Real>;
using Image = ImageT<float>;

/// Per-pixel class probabilities, C x H x W.
template <typename Real>
using ProbVolumeT = Tensor<Real>;
using ProbVolume = ProbVolumeT<float>;

/// Per-pixel class ids (H x W); kIgnoreLabel marks unlabeled pixels.
using LabelMap = Tensor<std::uint8_t>;
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Binary H x W mask selecting pixels whose pseudo-label is trusted.
using FilterMap = Tensor<std::uint8_t>;

/// Normalized self-entropy per pixel (H x W), values in [0, 1].
using EntropyMap = Tensor<float>;

/// Axis-aligned pixel rectangle inside a host raster.
struct Rect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Throws ShapeError unless `rect` fits in a height x width host and is at least 2x2.
void check_rect(const Rect& rect, std::size_t height, std::size_t width);

/// Spatial extents (H, W) of a rank-2 or rank-3 tensor.
template <typename T>
std::pair<std::size_t, std::size_t> spatial_dims(const Tensor<T>& t) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(1), t.dim(2)};
  throw ShapeError("expected a rank-2 or rank-3 tensor, got " + dims_to_string(t.dims()));
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.values().begin(), src.values().end());
  return Tensor<To>(src.dims(), std::move(out));
}

}  // namespace lse
