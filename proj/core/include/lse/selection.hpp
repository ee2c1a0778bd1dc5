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
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lse/entropy.hpp"
#include "lse/tensor.hpp"

namespace lse {

using ImageId = std::uint32_t;

/// Class-conditional confidence of one image: for every class that wins the
/// argmax somewhere, the mean of the per-pixel max probability over those
/// pixels. Classes that never win are empty.
struct ClassConfidence {
  std::vector<std::optional<float>> per_class;

  bool present(std::size_t c) const { return per_class.at(c).has_value(); }
};

template <typename Real>
ClassConfidence score_image(const ProbVolumeT<Real>& probs);

/// Confidence rows for a target set, keyed by image id.
class ClassConfidenceTable {
 public:
  struct Row {
    ImageId id;
    ClassConfidence scores;
  };

  explicit ClassConfidenceTable(std::size_t classes) : classes_(classes) {}

  void add(ImageId id, ClassConfidence scores);

  std::size_t classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const std::vector<Row>& rows() const noexcept { return rows_; }

 private:
  std::size_t classes_;
  std::vector<Row> rows_;
};

struct SelectionConfig {
  double initial_portion = 0.1;     // p at round 0
  double portion_increment = 0.05;  // added to p after every round
  std::size_t classes = 0;
  std::size_t round = 0;
};

/// Portion in effect for `cfg.round`: min(p0 + r * dp, 1).
double round_portion(const SelectionConfig& cfg);

/// Number of images taken from a class list of `candidates` entries:
/// ceil(candidates * portion / classes), at least one when the list is non-empty.
std::size_t class_quota(std::size_t candidates, double portion, std::size_t classes);

struct ClassRanking {
  std::vector<ImageId> sorted;  // descending confidence, ties by ascending id
  std::size_t quota = 0;        // prefix length taken for this class

  std::optional<ImageId> boundary() const {
    if (quota == 0) return std::nullopt;
    return sorted[quota - 1];
  }
};

struct ConfidentSubset {
  double portion = 0;
  std::vector<ClassRanking> per_class;
  std::vector<ImageId> selected;  // union of class prefixes, first occurrence kept
};

/// Ranks images per class and takes the confident prefix of each list.
/// Throws ValueError on an empty table.
ConfidentSubset select_confident(const ClassConfidenceTable& table, const SelectionConfig& cfg);

/// Probability volume of a target image under the current model.
using ProbSource = std::function<ProbVolume(ImageId)>;

/// h_c = mean normalized entropy over the boundary image's class-c pixels.
/// Classes with an empty list, or whose boundary image has no class-c
/// pixels, stay invalid.
ThresholdVector extract_thresholds(const ConfidentSubset& subset, const ProbSource& probs);

struct SelectionResult {
  std::size_t round = 0;
  double portion = 0;
  std::vector<ImageId> selected;
  ThresholdVector thresholds;
  std::vector<std::size_t> per_class_count;

  std::size_t total_class_selections() const;
};

/// Full class-based sorting pass: rank, slice, union and calibrate thresholds.
SelectionResult select_images(const ClassConfidenceTable& table, const SelectionConfig& cfg,
                              const ProbSource& probs);

nlohmann::json to_json(const SelectionResult& result);
SelectionResult selection_from_json(const nlohmann::json& doc);

}  // namespace lse
