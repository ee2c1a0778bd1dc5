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

#include "lse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lse/rng.hpp"
#include "lse/tensor_io.hpp"

namespace lse {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

// Unfolds 3x3 neighbourhoods (zero padded) into a (channels * 9) x (H * W) matrix.
template <typename Real>
RowMat<Real> im2col(const Real* in, std::size_t channels, std::size_t h, std::size_t w) {
  RowMat<Real> col(static_cast<Eigen::Index>(channels * 9), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < channels; ++c) {
    const Real* plane = in + c * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        Real* dst = col.data() + (c * 9 + ky * 3 + kx) * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          Real* row = dst + y * w;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + w, Real{0});
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(sy) * w;
          // Column shift of kx - 1 with zero fill at the borders.
          if (kx == 0) {
            row[0] = 0;
            std::copy(src, src + w - 1, row + 1);
          } else if (kx == 1) {
            std::copy(src, src + w, row);
          } else {
            std::copy(src + 1, src + w, row);
            row[w - 1] = 0;
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters column gradients back onto the input planes.
template <typename Real>
void col2im_add(const RowMat<Real>& col, Real* out, std::size_t channels, std::size_t h,
                std::size_t w) {
  for (std::size_t c = 0; c < channels; ++c) {
    Real* plane = out + c * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const Real* src = col.data() + (c * 9 + ky * 3 + kx) * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          Real* dst = plane + static_cast<std::size_t>(sy) * w;
          const Real* row = src + y * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) dst[x - 1] += row[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) dst[x] += row[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) dst[x + 1] += row[x];
          }
        }
      }
    }
  }
}

template <typename Real>
void conv_layer(const Tensor<Real>& weight, const Tensor<Real>& bias, const RowMat<Real>& col,
                Real* out, std::size_t pixels, bool relu) {
  const auto out_ch = static_cast<Eigen::Index>(weight.dim(0));
  ConstMatMap<Real> wmat(weight.data(), out_ch, col.rows());
  MatMap<Real> omat(out, out_ch, static_cast<Eigen::Index>(pixels));
  omat.noalias() = wmat * col;
  for (Eigen::Index o = 0; o < out_ch; ++o) {
    omat.row(o).array() += bias[static_cast<std::size_t>(o)];
    if (relu) omat.row(o) = omat.row(o).cwiseMax(Real{0});
  }
}

template <typename Real>
void check_image(const ImageT<Real>& image) {
  if (image.rank() != 3 || image.dim(0) != ModelParamsT<Real>::kInputChannels) {
    throw ShapeError("model input must be 3 x H x W, got " + dims_to_string(image.dims()));
  }
}

template <typename Real>
ForwardResult<Real> run_forward(const ModelParamsT<Real>& params, const ImageT<Real>& image) {
  check_image(image);
  constexpr std::size_t hidden = ModelParamsT<Real>::kHidden;
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  const std::size_t pixels = h * w;
  ForwardResult<Real> r;
  r.cache.input = image;
  r.cache.generation = params.generation;
  r.cache.hidden1 = Tensor<Real>({hidden, h, w});
  r.cache.hidden2 = Tensor<Real>({hidden, h, w});
  r.logits = Tensor<Real>({params.classes(), h, w});

  conv_layer(params.conv1_weight, params.conv1_bias, im2col(image.data(), 3, h, w),
             r.cache.hidden1.data(), pixels, true);
  conv_layer(params.conv2_weight, params.conv2_bias, im2col(r.cache.hidden1.data(), hidden, h, w),
             r.cache.hidden2.data(), pixels, true);

  ConstMatMap<Real> head(params.head_weight.data(), static_cast<Eigen::Index>(params.classes()),
                         static_cast<Eigen::Index>(hidden));
  ConstMatMap<Real> h2(r.cache.hidden2.data(), static_cast<Eigen::Index>(hidden),
                       static_cast<Eigen::Index>(pixels));
  MatMap<Real> out(r.logits.data(), static_cast<Eigen::Index>(params.classes()),
                   static_cast<Eigen::Index>(pixels));
  out.noalias() = head * h2;
  for (std::size_t c = 0; c < params.classes(); ++c) {
    out.row(static_cast<Eigen::Index>(c)).array() += params.head_bias[c];
  }
  return r;
}

template <typename Real>
void fill_uniform(Tensor<Real>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
}

template <typename Real>
void check_finite(const Tensor<Real>& t, std::string_view name) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw ValueError("non-finite gradient in parameter block '" + std::string(name) +
                       "' at element " + std::to_string(i));
    }
  }
}

}  // namespace

template <typename Real>
ModelParamsT<Real> ModelParamsT<Real>::zeros(std::size_t classes) {
  if (classes < 1 || classes >= kIgnoreLabel) throw ValueError("unsupported class count");
  ModelParamsT p;
  p.conv1_weight = Tensor<Real>({kHidden, kInputChannels, 3, 3});
  p.conv1_bias = Tensor<Real>({kHidden});
  p.conv2_weight = Tensor<Real>({kHidden, kHidden, 3, 3});
  p.conv2_bias = Tensor<Real>({kHidden});
  p.head_weight = Tensor<Real>({classes, kHidden});
  p.head_bias = Tensor<Real>({classes});
  return p;
}

template <typename Real>
ModelParamsT<Real> ModelParamsT<Real>::he_uniform(std::size_t classes, std::uint64_t seed) {
  ModelParamsT p = zeros(classes);
  Rng rng(seed);
  fill_uniform(p.conv1_weight, std::sqrt(6.0 / (kInputChannels * 9)), rng);
  fill_uniform(p.conv2_weight, std::sqrt(6.0 / (kHidden * 9)), rng);
  fill_uniform(p.head_weight, std::sqrt(6.0 / kHidden), rng);
  return p;
}

template <typename Real>
ForwardResult<Real> forward(const ModelParamsT<Real>& params, const ImageT<Real>& image) {
  return run_forward(params, image);
}

template <typename Real>
Tensor<Real> predict_logits(const ModelParamsT<Real>& params, const ImageT<Real>& image) {
  return run_forward(params, image).logits;
}

template <typename Real>
ModelParamsT<Real> backward(const ModelParamsT<Real>& params, const ForwardCache<Real>& cache,
                            const Tensor<Real>& grad_logits) {
  constexpr std::size_t hidden = ModelParamsT<Real>::kHidden;
  if (cache.input.empty() || cache.generation != params.generation) {
    throw ValueError("forward cache is stale: it was produced by another parameter generation");
  }
  const std::size_t h = cache.input.dim(1);
  const std::size_t w = cache.input.dim(2);
  const std::size_t pixels = h * w;
  const std::size_t classes = params.classes();
  if (grad_logits.dims() != Dims{classes, h, w}) {
    throw ShapeError("grad_logits " + dims_to_string(grad_logits.dims()) +
                     " does not match cached forward " + dims_to_string(Dims{classes, h, w}));
  }
  const auto C = static_cast<Eigen::Index>(classes);
  const auto K = static_cast<Eigen::Index>(hidden);
  const auto P = static_cast<Eigen::Index>(pixels);

  ModelParamsT<Real> g = ModelParamsT<Real>::zeros(classes);
  ConstMatMap<Real> g3(grad_logits.data(), C, P);
  ConstMatMap<Real> h2(cache.hidden2.data(), K, P);
  ConstMatMap<Real> h1(cache.hidden1.data(), K, P);

  MatMap<Real>(g.head_weight.data(), C, K).noalias() = g3 * h2.transpose();
  Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(g.head_bias.data(), C) = g3.rowwise().sum();

  RowMat<Real> dz2 = ConstMatMap<Real>(params.head_weight.data(), C, K).transpose() * g3;
  dz2.array() *= (h2.array() > Real{0}).template cast<Real>();

  const RowMat<Real> col1 = im2col(cache.hidden1.data(), hidden, h, w);
  MatMap<Real>(g.conv2_weight.data(), K, K * 9).noalias() = dz2 * col1.transpose();
  Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(g.conv2_bias.data(), K) = dz2.rowwise().sum();

  const RowMat<Real> dcol1 = ConstMatMap<Real>(params.conv2_weight.data(), K, K * 9).transpose() * dz2;
  RowMat<Real> dz1 = RowMat<Real>::Zero(K, P);
  col2im_add(dcol1, dz1.data(), hidden, h, w);
  dz1.array() *= (h1.array() > Real{0}).template cast<Real>();

  const RowMat<Real> col0 = im2col(cache.input.data(), 3, h, w);
  MatMap<Real>(g.conv1_weight.data(), K, 27).noalias() = dz1 * col0.transpose();
  Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(g.conv1_bias.data(), K) = dz1.rowwise().sum();
  return g;
}

template <typename Real>
void accumulate_grads(ModelParamsT<Real>& dst, const ModelParamsT<Real>& src) {
  auto d = dst.blocks();
  const auto s = src.blocks();
  for (std::size_t b = 0; b < d.size(); ++b) {
    if (d[b]->dims() != s[b]->dims()) throw ShapeError("gradient blocks are not congruent");
    for (std::size_t i = 0; i < d[b]->size(); ++i) (*d[b])[i] += (*s[b])[i];
  }
}

template <typename Real>
OptimizerStateT<Real> OptimizerStateT<Real>::for_params(const ModelParamsT<Real>& params) {
  OptimizerStateT s;
  s.first_moment = ModelParamsT<Real>::zeros(params.classes());
  s.second_moment = ModelParamsT<Real>::zeros(params.classes());
  return s;
}

template <typename Real>
void adam_step(ModelParamsT<Real>& params, const ModelParamsT<Real>& grads,
               OptimizerStateT<Real>& state) {
  auto w = params.blocks();
  const auto g = grads.blocks();
  auto m = state.first_moment.blocks();
  auto v = state.second_moment.blocks();
  for (std::size_t b = 0; b < w.size(); ++b) {
    if (w[b]->dims() != g[b]->dims() || w[b]->dims() != m[b]->dims() ||
        w[b]->dims() != v[b]->dims()) {
      throw ShapeError("adam_step: block '" + std::string(ModelParamsT<Real>::kBlockNames[b]) +
                       "' is not congruent with the optimizer state");
    }
    check_finite(*g[b], ModelParamsT<Real>::kBlockNames[b]);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < w.size(); ++b) {
    for (std::size_t i = 0; i < w[b]->size(); ++i) {
      const double gi = (*g[b])[i];
      const double mi = state.beta1 * (*m[b])[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * (*v[b])[i] + (1.0 - state.beta2) * gi * gi;
      (*m[b])[i] = static_cast<Real>(mi);
      (*v[b])[i] = static_cast<Real>(vi);
      const double update =
          state.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + state.epsilon);
      (*w[b])[i] = static_cast<Real>((*w[b])[i] - update);
    }
  }
  params.generation += 1;
}

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;
template struct OptimizerStateT<float>;
template struct OptimizerStateT<double>;
template ForwardResult<float> forward(const ModelParamsT<float>&, const ImageT<float>&);
template ForwardResult<double> forward(const ModelParamsT<double>&, const ImageT<double>&);
template Tensor<float> predict_logits(const ModelParamsT<float>&, const ImageT<float>&);
template Tensor<double> predict_logits(const ModelParamsT<double>&, const ImageT<double>&);
template ModelParamsT<float> backward(const ModelParamsT<float>&, const ForwardCache<float>&,
                                      const Tensor<float>&);
template ModelParamsT<double> backward(const ModelParamsT<double>&, const ForwardCache<double>&,
                                       const Tensor<double>&);
template void accumulate_grads(ModelParamsT<float>&, const ModelParamsT<float>&);
template void accumulate_grads(ModelParamsT<double>&, const ModelParamsT<double>&);
template void adam_step(ModelParamsT<float>&, const ModelParamsT<float>&, OptimizerStateT<float>&);
template void adam_step(ModelParamsT<double>&, const ModelParamsT<double>&, OptimizerStateT<double>&);

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'S', 'E', 'C'};
constexpr std::uint16_t kCheckpointVersion = 1;

std::string moment_name(std::string_view prefix, std::string_view block) {
  return std::string(prefix) + std::string(block);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const OptimizerState& state) {
  nlohmann::json blocks = nlohmann::json::array();
  const auto add = [&](std::string name, const Tensor<float>& t) {
    blocks.push_back({{"name", std::move(name)}, {"dims", t.dims()}});
  };
  const auto w = params.blocks();
  const auto m = state.first_moment.blocks();
  const auto v = state.second_moment.blocks();
  for (std::size_t b = 0; b < ModelParams::kBlocks; ++b) add(std::string(ModelParams::kBlockNames[b]), *w[b]);
  for (std::size_t b = 0; b < ModelParams::kBlocks; ++b) add(moment_name("adam.m.", ModelParams::kBlockNames[b]), *m[b]);
  for (std::size_t b = 0; b < ModelParams::kBlocks; ++b) add(moment_name("adam.v.", ModelParams::kBlockNames[b]), *v[b]);

  const nlohmann::json header = {
      {"format", "lsec"},
      {"classes", params.classes()},
      {"blocks", blocks},
      {"optimizer",
       {{"name", "adam"},
        {"learning_rate", state.learning_rate},
        {"beta1", state.beta1},
        {"beta2", state.beta2},
        {"epsilon", state.epsilon},
        {"step", state.step}}}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  out.put(static_cast<char>(kCheckpointVersion & 0xff));
  out.put(static_cast<char>(kCheckpointVersion >> 8));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* t : w) write_tensor(out, *t);
  for (const auto* t : m) write_tensor(out, *t);
  for (const auto* t : v) write_tensor(out, *t);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  char fixed[10];
  in.read(fixed, 10);
  if (in.gcount() != 10) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": truncated checkpoint header");
  }
  if (std::memcmp(fixed, kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, path.string() + ": not an LSEC checkpoint");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(fixed);
  const std::uint16_t version = static_cast<std::uint16_t>(u[4] | (u[5] << 8));
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = static_cast<std::uint32_t>(u[6]) | (static_cast<std::uint32_t>(u[7]) << 8) |
                            (static_cast<std::uint32_t>(u[8]) << 16) |
                            (static_cast<std::uint32_t>(u[9]) << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": truncated checkpoint header");
  }

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    const std::size_t classes = header.at("classes").get<std::size_t>();
    ck.params = ModelParams::zeros(classes);
    ck.state = OptimizerState::for_params(ck.params);
    const auto& opt = header.at("optimizer");
    ck.state.learning_rate = opt.at("learning_rate").get<double>();
    ck.state.beta1 = opt.at("beta1").get<double>();
    ck.state.beta2 = opt.at("beta2").get<double>();
    ck.state.epsilon = opt.at("epsilon").get<double>();
    ck.state.step = opt.at("step").get<std::uint64_t>();

    std::vector<Tensor<float>*> targets;
    for (auto* t : ck.params.blocks()) targets.push_back(t);
    for (auto* t : ck.state.first_moment.blocks()) targets.push_back(t);
    for (auto* t : ck.state.second_moment.blocks()) targets.push_back(t);
    const auto& blocks = header.at("blocks");
    if (blocks.size() != targets.size()) {
      throw FormatError(FormatError::Kind::kBadHeader, path.string() + ": unexpected block count");
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Tensor<float> t = read_tensor_as<float>(in);
      const Dims declared = blocks[i].at("dims").get<Dims>();
      if (t.dims() != declared || t.dims() != targets[i]->dims()) {
        throw FormatError(FormatError::Kind::kBadHeader,
                          path.string() + ": block '" + blocks[i].at("name").get<std::string>() +
                              "' has dims " + dims_to_string(t.dims()));
      }
      *targets[i] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kBadHeader, path.string() + ": " + e.what());
  }
  ck.params.generation = ck.state.step;
  return ck;
}

}  // namespace lse
