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
#include <sstream>

#include <gtest/gtest.h>

#include "lse/error.hpp"
#include "lse/tensor.hpp"
#include "lse/tensor_io.hpp"
#include "lse/tensor_ops.hpp"
#include "test_support.hpp"

namespace lse {
namespace {

using testing::random_labels;
using testing::random_probs;
using testing::random_tensor;
using testing::TempDir;

TEST(TensorTest, RejectsInconsistentShapes) {
  EXPECT_THROW(Tensor<float>(Dims{}), ShapeError);
  EXPECT_THROW(Tensor<float>(Dims{2, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>(Dims{2, 2}, std::vector<float>(3)), ShapeError);
  const Tensor<float> t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_FLOAT_EQ(t.at(1, 2), 1.5f);
}

TEST(TensorTest, RectMustFitAndBeAtLeastTwoByTwo) {
  EXPECT_NO_THROW(check_rect(Rect{0, 0, 4, 4}, 4, 4));
  EXPECT_THROW(check_rect(Rect{1, 0, 4, 4}, 4, 4), ShapeError);
  EXPECT_THROW(check_rect(Rect{0, 0, 1, 4}, 4, 4), ShapeError);
}

TEST(SoftmaxTest, SymmetricLogitsGiveUniform) {
  const auto p = softmax(Tensor<float>({2, 1, 1}, 0.0f));
  EXPECT_FLOAT_EQ(p.at(0, 0, 0), 0.5f);
  EXPECT_FLOAT_EQ(p.at(1, 0, 0), 0.5f);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  const auto p = softmax(Tensor<float>({3, 1, 1}, 1000.0f));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p.at(c, 0, 0), 1.0 / 3.0, 1e-6);
}

TEST(SoftmaxTest, MatchesDirectEvaluation) {
  const auto p = softmax(Tensor<double>({3, 1, 1}, std::vector<double>{1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p.at(0, 0, 0), 0.09003, 1e-4);
  EXPECT_NEAR(p.at(1, 0, 0), 0.24473, 1e-4);
  EXPECT_NEAR(p.at(2, 0, 0), 0.66524, 1e-4);
  EXPECT_NEAR(p.at(2, 0, 0), std::exp(3.0) / z, 1e-12);
}

TEST(SoftmaxTest, NonFiniteLogitNamesPixel) {
  Tensor<float> logits({2, 2, 3}, 0.0f);
  logits.at(1, 1, 2) = std::nanf("");
  try {
    softmax(logits);
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, col 2"), std::string::npos) << e.what();
  }
}

TEST(SoftmaxTest, PropertyOutputIsProbabilityVolume) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto logits = random_tensor<float>({5, 4, 6}, rng, -60.0, 60.0);
    EXPECT_NO_THROW(check_prob_volume(softmax(logits)));
  }
}

TEST(ArgmaxTest, Fixtures) {
  ProbVolume p({3, 1, 3});
  // pixel 0 one-hot on class 2, pixel 1 uniform, pixel 2 (0.2, 0.5, 0.3)
  const float v[3][3] = {{0, 1.0f / 3, 0.2f}, {0, 1.0f / 3, 0.5f}, {1, 1.0f / 3, 0.3f}};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 3; ++j) p.at(c, 0, j) = v[c][j];
  }
  const LabelMap y = argmax_labels(p);
  EXPECT_EQ(y.at(0, 0), 2);
  EXPECT_EQ(y.at(0, 1), 0);
  EXPECT_EQ(y.at(0, 2), 1);
}

TEST(CropResizeTest, FullRectSameSizeIsIdentity) {
  Rng rng(3);
  const auto img = random_tensor<float>({3, 5, 7}, rng);
  const Rect full{0, 0, 5, 7};
  EXPECT_EQ(crop_resize(img, full, 5, 7, ResizeMode::kBilinear), img);
  EXPECT_EQ(crop_resize(img, full, 5, 7, ResizeMode::kNearest), img);
  const auto y = random_labels(6, 5, 7, rng);
  EXPECT_EQ(crop_resize(y, full, 5, 7, ResizeMode::kNearest), y);
}

TEST(CropResizeTest, NearestUpscaleReplicatesBlocks) {
  const LabelMap y({2, 2}, std::vector<std::uint8_t>{1, 2, 3, 4});
  const LabelMap up = crop_resize(y, Rect{0, 0, 2, 2}, 4, 4, ResizeMode::kNearest);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(up.at(i, j), y.at(i / 2, j / 2)) << i << "," << j;
  }
}

TEST(CropResizeTest, BilinearHalfPixelCenters) {
  // A 2x2 source whose rows are identical, so the result is a 1-D
  // interpolation of [0, 1] sampled at (j + 0.5) / 2 - 0.5, clamped.
  const Tensor<float> row({2, 2}, std::vector<float>{0, 1, 0, 1});
  const auto out = crop_resize(row, Rect{0, 0, 2, 2}, 1, 4, ResizeMode::kBilinear);
  const float want[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.at(0, j), want[j], 1e-6);
}

TEST(CropResizeTest, BilinearStaysWithinSourceRange) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = random_tensor<float>({9, 13}, rng, -3, 5);
    const Rect r{2, 3, 4, 6};
    float lo = 1e30f;
    float hi = -1e30f;
    for (std::size_t i = r.row; i < r.row + r.height; ++i) {
      for (std::size_t j = r.col; j < r.col + r.width; ++j) {
        lo = std::min(lo, src.at(i, j));
        hi = std::max(hi, src.at(i, j));
      }
    }
    const auto out = crop_resize(src, r, 11, 17, ResizeMode::kBilinear);
    for (float v : out.values()) {
      EXPECT_GE(v, lo - 1e-6f);
      EXPECT_LE(v, hi + 1e-6f);
    }
  }
}

TEST(CropResizeTest, NearestNeverInventsLabels) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_labels(6, 10, 12, rng);
    const Rect r{3, 1, 4, 5};
    std::vector<bool> present(256, false);
    for (std::size_t i = r.row; i < r.row + r.height; ++i) {
      for (std::size_t j = r.col; j < r.col + r.width; ++j) present[y.at(i, j)] = true;
    }
    const LabelMap out = crop_resize(y, r, 9, 13, ResizeMode::kNearest);
    for (auto v : out.values()) EXPECT_TRUE(present[v]);
  }
}

TEST(RenormalizeTest, ZeroMassBecomesUniform) {
  ProbVolume p({4, 1, 2}, 0.0f);
  p.at(1, 0, 1) = 2.0f;
  p.at(3, 0, 1) = 2.0f;
  renormalize(p);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(p.at(c, 0, 0), 0.25f);
  EXPECT_FLOAT_EQ(p.at(1, 0, 1), 0.5f);
  EXPECT_FLOAT_EQ(p.at(0, 0, 1), 0.0f);
}

TEST(CheckTest, ProbVolumeAndLabels) {
  ProbVolume bad({2, 1, 1}, std::vector<float>{0.7f, 0.7f});
  EXPECT_THROW(check_prob_volume(bad), ValueError);
  LabelMap y({1, 2}, std::vector<std::uint8_t>{1, kIgnoreLabel});
  EXPECT_NO_THROW(check_labels(y, 2));
  EXPECT_THROW(check_labels(y, 1), ValueError);
}

TEST(TensorIoTest, RoundTripIsBitExactForBothDtypes) {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_tensor<float>({2, 3, 1 + static_cast<std::size_t>(trial)}, rng, -1e6, 1e6);
    const auto y = random_labels(255, 4, 1 + static_cast<std::size_t>(trial), rng);
    std::stringstream fs;
    std::stringstream ys;
    write_tensor(fs, f);
    write_tensor(ys, y);
    const std::string fbytes = fs.str();
    EXPECT_EQ(read_tensor_as<float>(fs), f);
    EXPECT_EQ(read_tensor_as<std::uint8_t>(ys), y);
    std::stringstream copy(fbytes);
    std::stringstream again;
    write_tensor(again, read_tensor_as<float>(copy));
    EXPECT_EQ(again.str(), fbytes);
  }
}

TEST(TensorIoTest, HeaderLayout) {
  std::stringstream s;
  write_tensor(s, Tensor<std::uint8_t>({2, 3}, 7));
  const std::string b = s.str();
  ASSERT_EQ(b.size(), 4u + 2 + 1 + 1 + 8 + 6);
  EXPECT_EQ(b.substr(0, 4), "LSET");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);  // version, little endian
  EXPECT_EQ(static_cast<unsigned char>(b[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 1);  // u8 dtype
  EXPECT_EQ(static_cast<unsigned char>(b[7]), 2);  // rank
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 3);
}

FormatError::Kind read_error_kind(const std::string& bytes) {
  std::stringstream s(bytes);
  try {
    read_tensor(s);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected FormatError";
  return FormatError::Kind::kBadHeader;
}

TEST(TensorIoTest, CorruptInputsAreClassified) {
  std::stringstream s;
  write_tensor(s, Tensor<float>({2, 2}, 1.0f));
  const std::string good = s.str();

  std::string magic = good;
  magic.replace(0, 4, "XXXX");
  EXPECT_EQ(read_error_kind(magic), FormatError::Kind::kBadMagic);

  std::string version = good;
  version[4] = 9;
  EXPECT_EQ(read_error_kind(version), FormatError::Kind::kBadVersion);

  std::string dtype = good;
  dtype[6] = 7;
  EXPECT_EQ(read_error_kind(dtype), FormatError::Kind::kBadDtype);

  EXPECT_EQ(read_error_kind(good.substr(0, good.size() - 1)), FormatError::Kind::kTruncated);

  std::string huge = good;
  for (int i = 0; i < 4; ++i) huge[8 + i] = static_cast<char>(0xff);
  for (int i = 0; i < 4; ++i) huge[12 + i] = static_cast<char>(0xff);
  EXPECT_EQ(read_error_kind(huge), FormatError::Kind::kDimsOverflow);

  std::string zero = good;
  for (int i = 0; i < 4; ++i) zero[8 + i] = 0;
  EXPECT_EQ(read_error_kind(zero), FormatError::Kind::kBadHeader);
}

TEST(TensorIoTest, FileTrailingBytesAreRejected) {
  TempDir dir("tensor_io");
  const auto path = dir / "t.lst";
  write_tensor(path, Tensor<float>({3}, 2.0f));
  EXPECT_EQ(read_tensor_as<float>(path), Tensor<float>({3}, 2.0f));
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "xx";
  }
  EXPECT_THROW(read_tensor(path), FormatError);
  EXPECT_THROW(read_tensor(dir / "missing.lst"), IoError);
}

TEST(TensorIoTest, WrongDtypeRequestIsAnError) {
  std::stringstream s;
  write_tensor(s, Tensor<float>({2}, 1.0f));
  EXPECT_THROW(read_tensor_as<std::uint8_t>(s), FormatError);
}

TEST(TensorIoTest, PgmRoundsHalfUp) {
  TempDir dir("pgm");
  write_pgm(dir / "e.pgm", Tensor<float>({1, 3}, std::vector<float>{0.0f, 0.5f, 1.0f}));
  const std::string b = testing::read_bytes(dir / "e.pgm");
  ASSERT_GE(b.size(), 3u);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 3]), 0);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 2]), 128);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 1]), 255);
}

}  // namespace
}  // namespace lse
