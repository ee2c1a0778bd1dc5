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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lse/selection.hpp"
#include "lse/tensor.hpp"

namespace lse {

/// C x C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_.at(gt * classes_ + pred); }
  std::uint64_t total() const;

  /// Counts every pixel whose ground truth is not ignore. Predictions must be
  /// valid class ids.
  void accumulate(const LabelMap& pred, const LabelMap& gt);
  void merge(const ConfusionMatrix& other);

  Tensor<float> to_tensor() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct EvalReport {
  std::vector<std::optional<double>> iou;  // empty when a class is absent from GT and prediction
  double miou = 0;
  double pixel_accuracy = 0;
  std::size_t images = 0;
};

/// Per-class IoU = TP / (TP + FP + FN); classes with an empty union are left
/// out of the mean. Throws ValueError when no class is defined.
EvalReport miou(const ConfusionMatrix& cm, std::size_t images = 0);

/// `class,iou` rows followed by `miou`, `pixel_accuracy` and `images`.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

/// Per-round selection history of one run, labelled by configuration.
struct SelectionHistory {
  std::string config;
  std::vector<SelectionResult> rounds;
};

/// Long-format CSV: `config,round,class,count,h`.
void write_selection_history_csv(const std::filesystem::path& path, const SelectionHistory& history);
SelectionHistory read_selection_history_csv(const std::filesystem::path& path);

struct SelectionReportRow {
  std::size_t round = 0;
  std::size_t cls = 0;
  std::size_t with_focal = 0;
  std::size_t without_focal = 0;
};

/// Per-class selected-image counts per round for runs with and without the
/// focal term. Both histories must cover the same rounds and classes.
std::vector<SelectionReportRow> selection_report(const SelectionHistory& with_focal,
                                                 const SelectionHistory& without_focal);

void write_selection_report_csv(const std::filesystem::path& path, const std::vector<SelectionReportRow>& rows);

/// Population standard deviation of per-class counts in one round.
double class_count_stddev(const SelectionResult& result);

}  // namespace lse
