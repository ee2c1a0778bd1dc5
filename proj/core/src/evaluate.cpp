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

#include "lse/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace lse {
namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(9);
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.dims() != gt.dims()) {
    throw ShapeError("confusion: prediction " + dims_to_string(pred.dims()) + " vs ground truth " +
                     dims_to_string(gt.dims()));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt[i];
    if (g == kIgnoreLabel) continue;
    const std::uint8_t p = pred[i];
    if (g >= classes_ || p >= classes_) {
      throw ValueError("confusion: label out of range at pixel " + std::to_string(i));
    }
    ++counts_[g * classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Tensor<float> ConfusionMatrix::to_tensor() const {
  Tensor<float> t({classes_, classes_});
  for (std::size_t i = 0; i < counts_.size(); ++i) t[i] = static_cast<float>(counts_[i]);
  return t;
}

EvalReport miou(const ConfusionMatrix& cm, std::size_t images) {
  const std::size_t classes = cm.classes();
  EvalReport report;
  report.images = images;
  report.iou.resize(classes);
  double sum = 0;
  std::size_t defined = 0;
  std::uint64_t diagonal = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    diagonal += tp;
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    report.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += *report.iou[c];
    ++defined;
  }
  if (defined == 0) throw ValueError("mIoU undefined: no class occurs in ground truth or prediction");
  report.miou = sum / static_cast<double>(defined);
  report.pixel_accuracy = static_cast<double>(diagonal) / static_cast<double>(cm.total());
  return report;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_csv(path);
  out << "class,iou\n";
  for (std::size_t c = 0; c < report.iou.size(); ++c) {
    out << c << ',';
    if (report.iou[c]) out << *report.iou[c];
    out << '\n';
  }
  out << "miou," << report.miou << '\n';
  out << "pixel_accuracy," << report.pixel_accuracy << '\n';
  out << "images," << report.images << '\n';
}

void write_selection_history_csv(const std::filesystem::path& path, const SelectionHistory& history) {
  auto out = open_csv(path);
  out << "config,round,class,count,h\n";
  for (const auto& r : history.rounds) {
    for (std::size_t c = 0; c < r.per_class_count.size(); ++c) {
      out << history.config << ',' << r.round << ',' << c << ',' << r.per_class_count[c] << ',';
      if (const auto h = r.thresholds.get(c)) out << *h;
      out << '\n';
    }
  }
}

SelectionHistory read_selection_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "config,round,class,count,h") {
    throw FormatError(FormatError::Kind::kBadHeader, path.string() + ": not a selection history");
  }
  SelectionHistory history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw FormatError(FormatError::Kind::kBadHeader, path.string() + ": bad row '" + line + "'");
    history.config = f[0];
    const std::size_t round = std::stoul(f[1]);
    const std::size_t cls = std::stoul(f[2]);
    if (history.rounds.empty() || history.rounds.back().round != round) {
      SelectionResult r;
      r.round = round;
      history.rounds.push_back(std::move(r));
    }
    auto& r = history.rounds.back();
    if (cls != r.per_class_count.size()) {
      throw FormatError(FormatError::Kind::kBadHeader, path.string() + ": classes out of order");
    }
    r.per_class_count.push_back(std::stoul(f[3]));
    ThresholdVector grown(cls + 1);
    for (std::size_t c = 0; c < cls; ++c) {
      if (const auto h = r.thresholds.get(c)) grown.set(c, *h);
    }
    if (!f[4].empty()) grown.set(cls, std::stof(f[4]));
    r.thresholds = std::move(grown);
  }
  return history;
}

std::vector<SelectionReportRow> selection_report(const SelectionHistory& with_focal,
                                                 const SelectionHistory& without_focal) {
  if (with_focal.rounds.size() != without_focal.rounds.size()) {
    throw ValueError("selection histories cover different numbers of rounds");
  }
  std::vector<SelectionReportRow> rows;
  for (std::size_t i = 0; i < with_focal.rounds.size(); ++i) {
    const auto& a = with_focal.rounds[i];
    const auto& b = without_focal.rounds[i];
    if (a.round != b.round || a.per_class_count.size() != b.per_class_count.size()) {
      throw ValueError("selection histories disagree on rounds or classes");
    }
    for (std::size_t c = 0; c < a.per_class_count.size(); ++c) {
      rows.push_back({a.round, c, a.per_class_count[c], b.per_class_count[c]});
    }
  }
  return rows;
}

void write_selection_report_csv(const std::filesystem::path& path, const std::vector<SelectionReportRow>& rows) {
  auto out = open_csv(path);
  out << "round,class,with_focal,without_focal\n";
  for (const auto& r : rows) out << r.round << ',' << r.cls << ',' << r.with_focal << ',' << r.without_focal << '\n';
}

double class_count_stddev(const SelectionResult& result) {
  const auto& counts = result.per_class_count;
  if (counts.empty()) return 0;
  const double mean = static_cast<double>(result.total_class_selections()) / static_cast<double>(counts.size());
  double var = 0;
  for (std::size_t n : counts) var += (static_cast<double>(n) - mean) * (static_cast<double>(n) - mean);
  return std::sqrt(var / static_cast<double>(counts.size()));
}

}  // namespace lse
