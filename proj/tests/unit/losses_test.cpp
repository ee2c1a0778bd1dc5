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

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "lse/error.hpp"
#include "lse/losses.hpp"
#include "lse/tensor_ops.hpp"
#include "test_support.hpp"

namespace lse {
namespace {

using testing::random_filter;
using testing::random_labels;
using testing::random_probs;
using testing::random_tensor;
using testing::rel_err;

using LossFn = std::function<LossValueT<double>(const ProbVolumeT<double>&)>;

/// Max relative error between the analytic logit gradient and central
/// differences of the loss through the softmax.
double gradient_error(const LossFn& fn, Tensor<double> logits, double step = 1e-4) {
  const auto analytic = fn(softmax(logits)).grad;
  double worst = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double saved = logits[k];
    logits[k] = saved + step;
    const double up = fn(softmax(logits)).loss;
    logits[k] = saved - step;
    const double down = fn(softmax(logits)).loss;
    logits[k] = saved;
    worst = std::max(worst, rel_err(analytic[k], (up - down) / (2 * step), 1e-4));
  }
  return worst;
}

ProbVolumeT<double> pixel(std::vector<double> p) {
  const std::size_t c = p.size();
  return ProbVolumeT<double>({c, 1, 1}, std::move(p));
}

TEST(CeLossTest, Fixtures) {
  const LabelMap y0({1, 1}, 0);
  EXPECT_EQ(ce_loss(pixel({1, 0}), y0).loss, 0.0);
  EXPECT_NEAR(ce_loss(pixel({0.5, 0.5}), y0).loss, std::log(2.0), 1e-12);
  const auto ignored = ce_loss(pixel({0.3, 0.7}), LabelMap({1, 1}, kIgnoreLabel));
  EXPECT_EQ(ignored.loss, 0.0);
  EXPECT_EQ(ignored.count, 0u);
  for (double g : ignored.grad.values()) EXPECT_EQ(g, 0.0);
  EXPECT_THROW(ce_loss(pixel({0.5, 0.5}), LabelMap({1, 1}, 2)), ValueError);
}

TEST(CeLossTest, MeanReductionDividesByCount) {
  Rng rng(1);
  const auto p = random_probs<double>(3, 4, 5, rng);
  const auto y = random_labels(3, 4, 5, rng, 0.25);
  const auto sum = ce_loss(p, y, Reduction::kSum);
  const auto mean = ce_loss(p, y, Reduction::kMeanPerPixel);
  ASSERT_GT(sum.count, 0u);
  EXPECT_NEAR(mean.loss, sum.loss / static_cast<double>(sum.count), 1e-12);
  EXPECT_NEAR(mean.grad[3], sum.grad[3] / static_cast<double>(sum.count), 1e-12);
}

TEST(FilteredCeLossTest, FilterExtremesAndHandComposition) {
  Rng rng(2);
  const auto p = random_probs<double>(4, 3, 3, rng);
  const auto y = random_labels(4, 3, 3, rng);
  const auto ones = filtered_ce_loss(p, y, FilterMap({3, 3}, 1));
  const auto ce = ce_loss(p, y);
  EXPECT_EQ(ones.loss, ce.loss);
  EXPECT_EQ(ones.grad, ce.grad);
  EXPECT_EQ(filtered_ce_loss(p, y, FilterMap({3, 3}, 0)).loss, 0.0);

  const ProbVolumeT<double> two({2, 1, 2}, std::vector<double>{0.8, 0.4, 0.2, 0.6});
  const LabelMap y2({1, 2}, std::vector<std::uint8_t>{0, 1});
  const FilterMap f({1, 2}, std::vector<std::uint8_t>{1, 0});
  EXPECT_NEAR(filtered_ce_loss(two, y2, f).loss, -std::log(0.8), 1e-12);
}

TEST(FocalLossTest, Fixtures) {
  LossConfig cfg;
  cfg.focal_gamma = 3;
  const LabelMap y({1, 1}, 0);
  const FilterMap f({1, 1}, 1);
  EXPECT_NEAR(focal_loss(pixel({0.5, 0.5}), y, f, cfg).loss, 0.0866, 1e-4);
  EXPECT_NEAR(focal_loss(pixel({0.5, 0.5}), y, f, cfg).loss, std::log(2.0) * 0.125, 1e-12);
  for (double g : {0.0, 1.0, 3.0, 5.0}) {
    cfg.focal_gamma = g;
    EXPECT_EQ(focal_loss(pixel({1, 0}), y, f, cfg).loss, 0.0);
  }
}

TEST(FocalLossTest, GammaZeroEqualsCrossEntropy) {
  Rng rng(3);
  LossConfig cfg;
  cfg.focal_gamma = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_probs<double>(5, 4, 4, rng);
    const auto y = random_labels(5, 4, 4, rng, 0.1);
    const auto f = random_filter(4, 4, rng);
    const auto fl = focal_loss(p, y, f, cfg);
    const auto ce = ce_loss(p, y);
    EXPECT_NEAR(fl.loss, ce.loss, 1e-7);
    for (std::size_t k = 0; k < fl.grad.size(); ++k) EXPECT_NEAR(fl.grad[k], ce.grad[k], 1e-7);
    cfg.focal_masked = true;
    EXPECT_NEAR(focal_loss(p, y, f, cfg).loss, filtered_ce_loss(p, y, f).loss, 1e-7);
    cfg.focal_masked = false;
  }
}

TEST(FocalLossTest, BoundedByCrossEntropyAndNonNegative) {
  Rng rng(4);
  LossConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    cfg.focal_gamma = 0.5 * trial;
    const auto p = random_probs<double>(3, 3, 3, rng);
    const auto y = random_labels(3, 3, 3, rng);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        LabelMap one({3, 3}, kIgnoreLabel);
        one.at(i, j) = y.at(i, j);
        const double fl = focal_loss(p, one, FilterMap({3, 3}, 1), cfg).loss;
        EXPECT_GE(fl, 0.0);
        EXPECT_LE(fl, ce_loss(p, one).loss + 1e-15);
      }
    }
  }
}

TEST(LossGradientTest, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto logits = random_tensor<double>({2, 3, 3}, rng, -2, 2);
    const auto y = random_labels(2, 3, 3, rng, 0.1);
    const auto f = random_filter(3, 3, rng);
    EXPECT_LE(gradient_error([&](const auto& p) { return ce_loss(p, y); }, logits), 1e-3) << seed;
    EXPECT_LE(gradient_error([&](const auto& p) { return filtered_ce_loss(p, y, f); }, logits), 1e-3) << seed;
    for (double gamma : {0.0, 1.0, 3.0}) {
      LossConfig cfg;
      cfg.focal_gamma = gamma;
      EXPECT_LE(gradient_error([&](const auto& p) { return focal_loss(p, y, f, cfg); }, logits), 1e-3)
          << "seed " << seed << " gamma " << gamma;
    }
  }
}

TEST(LossGradientTest, NonContributingPixelsHaveZeroGradient) {
  Rng rng(9);
  const auto p = random_probs<double>(3, 4, 4, rng);
  const auto y = random_labels(3, 4, 4, rng, 0.3);
  const auto f = random_filter(4, 4, rng);
  const auto g = filtered_ce_loss(p, y, f).grad;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (y.at(i, j) != kIgnoreLabel && f.at(i, j)) continue;
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g.at(c, i, j), 0.0);
    }
  }
}

ScaleExample example(const LabelMap& y, const FilterMap& f) {
  ScaleExample ex;
  ex.image = Image({3, y.dim(0), y.dim(1)}, 0.0f);
  ex.labels = y;
  ex.filter = f;
  ex.rect = Rect{0, 0, y.dim(0), y.dim(1)};
  return ex;
}

TEST(AdaptationLossTest, WeightedSumOfFocalAndFilteredCe) {
  Rng rng(12);
  const auto y = random_labels(3, 4, 4, rng);
  const auto f = random_filter(4, 4, rng);
  const std::vector<ScaleExample> ex = {example(y, f)};
  const std::vector<ProbVolumeT<double>> p = {random_probs<double>(3, 4, 4, rng)};
  LossConfig cfg;
  const auto a = adaptation_loss<double>(ex, p, cfg);
  const double fl = focal_loss(p[0], y, f, cfg).loss;
  const double ce = filtered_ce_loss(p[0], y, f).loss;
  EXPECT_NEAR(a.total, cfg.focal_weight * fl + ce, 1e-12);
  EXPECT_NEAR(a.focal, fl, 1e-12);
  EXPECT_NEAR(a.cross_entropy, ce, 1e-12);
  // Scalar identity: FL = 0.2, CE = 1.0, beta = 0.1 -> 1.02.
  EXPECT_NEAR(0.1 * 0.2 + 1.0, 1.02, 1e-12);
}

TEST(AdaptationLossTest, ZeroWeightReducesToFilteredCe) {
  Rng rng(13);
  const auto y = random_labels(3, 4, 4, rng);
  const auto f = random_filter(4, 4, rng);
  const std::vector<ScaleExample> ex = {example(y, f)};
  const std::vector<ProbVolumeT<double>> p = {random_probs<double>(3, 4, 4, rng)};
  LossConfig cfg;
  cfg.focal_weight = 0;
  const auto a = adaptation_loss<double>(ex, p, cfg);
  const auto ce = filtered_ce_loss(p[0], y, f);
  EXPECT_EQ(a.total, ce.loss);
  EXPECT_EQ(a.grads[0], ce.grad);
}

TEST(AdaptationLossTest, DuplicatedExamplesDoubleEverything) {
  Rng rng(14);
  const auto y = random_labels(3, 4, 4, rng);
  const auto f = random_filter(4, 4, rng);
  const auto p0 = random_probs<double>(3, 4, 4, rng);
  const std::vector<ScaleExample> one = {example(y, f)};
  const std::vector<ScaleExample> two = {example(y, f), example(y, f)};
  const std::vector<ProbVolumeT<double>> p1 = {p0};
  const std::vector<ProbVolumeT<double>> p2 = {p0, p0};
  const LossConfig cfg;
  const auto a = adaptation_loss<double>(one, p1, cfg);
  const auto b = adaptation_loss<double>(two, p2, cfg);
  EXPECT_DOUBLE_EQ(b.total, 2 * a.total);
  EXPECT_EQ(b.count, 2 * a.count);
  ASSERT_EQ(b.grads.size(), 2u);
  EXPECT_EQ(b.grads[0], a.grads[0]);
  EXPECT_EQ(b.grads[1], a.grads[0]);
}

TEST(AdaptationLossTest, EmptyExampleListIsZero) {
  const auto a = adaptation_loss<float>({}, {}, LossConfig{});
  EXPECT_EQ(a.total, 0.0);
  EXPECT_EQ(a.count, 0u);
  EXPECT_TRUE(a.grads.empty());
}

TEST(AdaptationLossTest, AllFilteredOutLeavesOnlyUnmaskedFocal) {
  Rng rng(15);
  const auto y = random_labels(3, 4, 4, rng);
  const FilterMap none({4, 4}, 0);
  const std::vector<ScaleExample> ex = {example(y, none)};
  const std::vector<ProbVolumeT<double>> p = {random_probs<double>(3, 4, 4, rng)};
  LossConfig cfg;
  const auto a = adaptation_loss<double>(ex, p, cfg);
  EXPECT_EQ(a.cross_entropy, 0.0);
  EXPECT_EQ(a.count, 0u);
  EXPECT_GT(a.focal, 0.0);
  cfg.focal_masked = true;
  const auto masked = adaptation_loss<double>(ex, p, cfg);
  EXPECT_EQ(masked.total, 0.0);
  for (double g : masked.grads[0].values()) EXPECT_EQ(g, 0.0);
}

TEST(LossConfigTest, RejectsNegativeParameters) {
  LossConfig cfg;
  cfg.focal_gamma = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.focal_gamma = 1;
  cfg.focal_weight = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace lse
