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

#include "lse/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "lse/tensor_ops.hpp"

namespace lse {

template <typename Real>
ClassConfidence score_image(const ProbVolumeT<Real>& probs) {
  if (probs.rank() != 3) throw ShapeError("score_image expects a C x H x W volume");
  const std::size_t classes = probs.dim(0);
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  std::vector<double> sum(classes, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t px = 0; px < plane; ++px) {
    std::size_t best = 0;
    Real best_value = probs[px];
    for (std::size_t c = 1; c < classes; ++c) {
      if (probs[c * plane + px] > best_value) {
        best_value = probs[c * plane + px];
        best = c;
      }
    }
    sum[best] += best_value;
    ++count[best];
  }
  ClassConfidence out;
  out.per_class.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] > 0) out.per_class[c] = static_cast<float>(sum[c] / static_cast<double>(count[c]));
  }
  return out;
}

template ClassConfidence score_image(const ProbVolumeT<float>&);
template ClassConfidence score_image(const ProbVolumeT<double>&);

void ClassConfidenceTable::add(ImageId id, ClassConfidence scores) {
  if (scores.per_class.size() != classes_) {
    throw ShapeError("confidence row for image " + std::to_string(id) + " has " +
                     std::to_string(scores.per_class.size()) + " classes, table has " +
                     std::to_string(classes_));
  }
  rows_.push_back({id, std::move(scores)});
}

double round_portion(const SelectionConfig& cfg) {
  return std::min(cfg.initial_portion + static_cast<double>(cfg.round) * cfg.portion_increment, 1.0);
}

std::size_t class_quota(std::size_t candidates, double portion, std::size_t classes) {
  if (candidates == 0) return 0;
  // The slack absorbs representation error in p (0.1 + 3 * 0.05 is not 0.25).
  const double exact = static_cast<double>(candidates) * portion / static_cast<double>(classes);
  const auto quota = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(quota, 1, candidates);
}

ConfidentSubset select_confident(const ClassConfidenceTable& table, const SelectionConfig& cfg) {
  if (table.empty()) throw ValueError("class-based selection needs a non-empty target set");
  const std::size_t classes = table.classes();
  ConfidentSubset out;
  out.portion = round_portion(cfg);
  out.per_class.resize(classes);

  std::unordered_set<ImageId> seen;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::pair<float, ImageId>> candidates;
    for (const auto& row : table.rows()) {
      if (const auto& u = row.scores.per_class[c]) candidates.emplace_back(*u, row.id);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    ClassRanking& ranking = out.per_class[c];
    ranking.sorted.reserve(candidates.size());
    for (const auto& [u, id] : candidates) ranking.sorted.push_back(id);
    ranking.quota = class_quota(ranking.sorted.size(), out.portion, classes);
    for (std::size_t i = 0; i < ranking.quota; ++i) {
      if (seen.insert(ranking.sorted[i]).second) out.selected.push_back(ranking.sorted[i]);
    }
  }
  return out;
}

ThresholdVector extract_thresholds(const ConfidentSubset& subset, const ProbSource& probs) {
  const std::size_t classes = subset.per_class.size();
  ThresholdVector h(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto boundary = subset.per_class[c].boundary();
    if (!boundary) continue;
    const ProbVolume p = probs(*boundary);
    if (p.empty()) {
      throw ValueError("no probability volume for boundary image " + std::to_string(*boundary));
    }
    if (p.rank() != 3 || p.dim(0) != classes) {
      throw ShapeError("boundary image " + std::to_string(*boundary) + " has volume " +
                       dims_to_string(p.dims()));
    }
    const LabelMap labels = argmax_labels(p);
    const EntropyMap entropy = self_entropy(p);
    double total = 0;
    std::size_t n = 0;
    for (std::size_t px = 0; px < labels.size(); ++px) {
      if (labels[px] == c) {
        total += entropy[px];
        ++n;
      }
    }
    if (n > 0) h.set(c, static_cast<float>(std::clamp(total / static_cast<double>(n), 0.0, 1.0)));
  }
  return h;
}

std::size_t SelectionResult::total_class_selections() const {
  return std::accumulate(per_class_count.begin(), per_class_count.end(), std::size_t{0});
}

SelectionResult select_images(const ClassConfidenceTable& table, const SelectionConfig& cfg,
                              const ProbSource& probs) {
  ConfidentSubset subset = select_confident(table, cfg);
  SelectionResult out;
  out.round = cfg.round;
  out.portion = subset.portion;
  out.thresholds = extract_thresholds(subset, probs);
  out.per_class_count.reserve(subset.per_class.size());
  for (const auto& ranking : subset.per_class) out.per_class_count.push_back(ranking.quota);
  out.selected = std::move(subset.selected);
  return out;
}

nlohmann::json to_json(const SelectionResult& result) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < result.per_class_count.size(); ++c) {
    const auto h = result.thresholds.get(c);
    per_class[std::to_string(c)] = {{"count", result.per_class_count[c]},
                                    {"h", h ? nlohmann::json(*h) : nlohmann::json(nullptr)}};
  }
  return {{"round", result.round},
          {"p", result.portion},
          {"selected", result.selected},
          {"per_class", per_class}};
}

SelectionResult selection_from_json(const nlohmann::json& doc) {
  try {
    SelectionResult out;
    out.round = doc.at("round").get<std::size_t>();
    out.portion = doc.at("p").get<double>();
    out.selected = doc.at("selected").get<std::vector<ImageId>>();
    const auto& per_class = doc.at("per_class");
    const std::size_t classes = per_class.size();
    out.thresholds = ThresholdVector(classes);
    out.per_class_count.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& entry = per_class.at(std::to_string(c));
      out.per_class_count[c] = entry.at("count").get<std::size_t>();
      if (!entry.at("h").is_null()) out.thresholds.set(c, entry.at("h").get<float>());
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kBadHeader, std::string("bad selection document: ") + e.what());
  }
}

}  // namespace lse
