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

// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "lse/model.hpp"
#include "lse/rng.hpp"
#include "lse/tensor.hpp"

namespace lse::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename Real = float>
Tensor<Real> random_tensor(const Dims& dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<Real> t(dims);
  for (auto& v : t.values()) v = static_cast<Real>(u(rng));
  return t;
}

/// Probability volume drawn from a Dirichlet-like softmax of scaled Gaussians;
/// `sharpness` controls how peaked the pixels are.
template <typename Real = float>
ProbVolumeT<Real> random_probs(std::size_t classes, std::size_t h, std::size_t w, Rng& rng,
                               double sharpness = 2.0) {
  std::normal_distribution<double> n(0.0, sharpness);
  ProbVolumeT<Real> p({classes, h, w});
  std::vector<double> z(classes);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double m = -1e300;
      for (auto& v : z) {
        v = n(rng);
        m = std::max(m, v);
      }
      double s = 0;
      for (auto& v : z) s += (v = std::exp(v - m));
      for (std::size_t c = 0; c < classes; ++c) p.at(c, i, j) = static_cast<Real>(z[c] / s);
    }
  }
  return p;
}

inline LabelMap random_labels(std::size_t classes, std::size_t h, std::size_t w, Rng& rng,
                              double ignore_rate = 0.0) {
  std::uniform_int_distribution<int> c(0, static_cast<int>(classes) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabelMap y({h, w});
  for (auto& v : y.values()) v = u(rng) < ignore_rate ? kIgnoreLabel : static_cast<std::uint8_t>(c(rng));
  return y;
}

inline FilterMap random_filter(std::size_t h, std::size_t w, Rng& rng, double keep = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FilterMap f({h, w});
  for (auto& v : f.values()) v = u(rng) < keep ? 1 : 0;
  return f;
}

/// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
/// entries that are zero on both sides.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradientCheck {
  double max_rel_err = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +/- step changes a ReLU mask
};

inline bool same_relu_pattern(const ForwardCache<double>& a, const ForwardCache<double>& b) {
  for (std::size_t k = 0; k < a.hidden1.size(); ++k) {
    if ((a.hidden1[k] > 0) != (b.hidden1[k] > 0)) return false;
  }
  for (std::size_t k = 0; k < a.hidden2.size(); ++k) {
    if ((a.hidden2[k] > 0) != (b.hidden2[k] > 0)) return false;
  }
  return true;
}

/// Central differences of <g, logits(params)> against backward() for a
/// random 8x8, two-class network in double precision. A central difference
/// is only a derivative estimate when both probes share the activation
/// pattern, so coordinates whose probes straddle a ReLU kink are skipped
/// and counted.
inline GradientCheck model_gradient_check(std::uint64_t seed, double step = 1e-4) {
  Rng rng(seed);
  auto params = convert_params<double>(ModelParamsT<float>::he_uniform(2, seed));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (auto* b : params.blocks()) {
    for (auto& v : b->values()) v += jitter(rng);
  }
  const auto x = random_tensor<double>({3, 8, 8}, rng, 0, 1);
  const auto g = random_tensor<double>({2, 8, 8}, rng);
  const auto analytic = backward(params, forward(params, x).cache, g);
  const auto dot = [&](const Tensor<double>& logits) {
    double s = 0;
    for (std::size_t k = 0; k < logits.size(); ++k) s += g[k] * logits[k];
    return s;
  };
  GradientCheck out;
  const auto ab = analytic.blocks();
  const auto pb = params.blocks();
  for (std::size_t k = 0; k < pb.size(); ++k) {
    for (std::size_t i = 0; i < pb[k]->size(); ++i) {
      const double saved = (*pb[k])[i];
      (*pb[k])[i] = saved + step;
      const auto up = forward(params, x);
      (*pb[k])[i] = saved - step;
      const auto down = forward(params, x);
      (*pb[k])[i] = saved;
      if (!same_relu_pattern(up.cache, down.cache)) {
        ++out.skipped;
        continue;
      }
      const double numeric = (dot(up.logits) - dot(down.logits)) / (2 * step);
      out.max_rel_err = std::max(out.max_rel_err, rel_err((*ab[k])[i], numeric, 1e-4));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace lse::testing
