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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "lse/tensor.hpp"

namespace lse {

/// Weights of the segmentation network:
///   conv3x3(3 -> 16) -> ReLU -> conv3x3(16 -> 16) -> ReLU -> conv1x1(16 -> C).
/// Convolutions use zero "same" padding and stride 1. Kernels are stored
/// (out, in, kh, kw).
template <typename Real>
struct ModelParamsT {
  static constexpr std::size_t kInputChannels = 3;
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kBlocks = 6;
  static constexpr std::array<std::string_view, kBlocks> kBlockNames = {
      "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "head.weight", "head.bias"};

  Tensor<Real> conv1_weight;
  Tensor<Real> conv1_bias;
  Tensor<Real> conv2_weight;
  Tensor<Real> conv2_bias;
  Tensor<Real> head_weight;
  Tensor<Real> head_bias;

  /// Bumped by every optimizer step; forward caches record it so stale
  /// caches are rejected by backward.
  std::uint64_t generation = 0;

  static ModelParamsT zeros(std::size_t classes);

  /// He-uniform fan-in initialization, zero biases.
  static ModelParamsT he_uniform(std::size_t classes, std::uint64_t seed);

  std::size_t classes() const { return head_bias.dim(0); }

  std::array<Tensor<Real>*, kBlocks> blocks() {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &head_weight, &head_bias};
  }
  std::array<const Tensor<Real>*, kBlocks> blocks() const {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &head_weight, &head_bias};
  }

  friend bool operator==(const ModelParamsT& a, const ModelParamsT& b) {
    const auto x = a.blocks();
    const auto y = b.blocks();
    for (std::size_t i = 0; i < kBlocks; ++i) {
      if (!(*x[i] == *y[i])) return false;
    }
    return true;
  }
};

using ModelParams = ModelParamsT<float>;

template <typename To, typename From>
ModelParamsT<To> convert_params(const ModelParamsT<From>& src) {
  ModelParamsT<To> out;
  const auto s = src.blocks();
  const auto d = out.blocks();
  for (std::size_t i = 0; i < s.size(); ++i) *d[i] = tensor_cast<To>(*s[i]);
  out.generation = src.generation;
  return out;
}

/// Activations retained by forward for the matching backward call.
template <typename Real>
struct ForwardCache {
  Tensor<Real> input;    // 3 x H x W
  Tensor<Real> hidden1;  // 16 x H x W, post-ReLU
  Tensor<Real> hidden2;  // 16 x H x W, post-ReLU
  std::uint64_t generation = 0;
};

template <typename Real>
struct ForwardResult {
  Tensor<Real> logits;  // C x H x W
  ForwardCache<Real> cache;
};

template <typename Real>
ForwardResult<Real> forward(const ModelParamsT<Real>& params, const ImageT<Real>& image);

/// Logits only; skips retaining the activation cache.
template <typename Real>
Tensor<Real> predict_logits(const ModelParamsT<Real>& params, const ImageT<Real>& image);

/// Reverse-mode gradient of <grad_logits, logits> with respect to every
/// parameter block. Throws if the cache was produced by a different
/// parameter generation or grad_logits does not match the cached shape.
template <typename Real>
ModelParamsT<Real> backward(const ModelParamsT<Real>& params, const ForwardCache<Real>& cache,
                            const Tensor<Real>& grad_logits);

/// Adds `src` into `dst` block by block.
template <typename Real>
void accumulate_grads(ModelParamsT<Real>& dst, const ModelParamsT<Real>& src);

template <typename Real>
struct OptimizerStateT {
  ModelParamsT<Real> first_moment;
  ModelParamsT<Real> second_moment;
  std::uint64_t step = 0;
  // Published schedule for pretrained backbones is lr 1e-6 with beta1 0.9;
  // the small network here trains from scratch and needs 1e-3.
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerStateT for_params(const ModelParamsT<Real>& params);
};

using OptimizerState = OptimizerStateT<float>;

/// Bias-corrected Adam update. Rejects non-finite gradients (naming the
/// block) before touching any state.
template <typename Real>
void adam_step(ModelParamsT<Real>& params, const ModelParamsT<Real>& grads,
               OptimizerStateT<Real>& state);

/// `.lsec` checkpoint: "LSEC", u16 version, u32 header length, JSON header
/// (block names, dims, optimizer hyperparameters, step), then one `.lst`
/// record per block: parameters followed by Adam first and second moments.
void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const OptimizerState& state);

struct Checkpoint {
  ModelParams params;
  OptimizerState state;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace lse
