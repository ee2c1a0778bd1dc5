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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lse/losses.hpp"
#include "lse/selection.hpp"

namespace lse {

/// Values accepted by the configuration reader: the scalar subset of TOML
/// (strings, integers, floats, booleans) under `[section]` headers.
using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

ConfigTable parse_config(const std::string& text, const std::string& origin = "<config>");
ConfigTable read_config_file(const std::filesystem::path& path);

/// Applies a `section.key=value` override; the value uses config syntax and
/// falls back to a bare string.
void apply_override(ConfigTable& table, const std::string& assignment);

enum class FilterMode { kDynamic, kAll, kNone };

const char* to_string(FilterMode mode);

struct RunConfig {
  // [data]
  std::filesystem::path source_manifest;
  std::filesystem::path target_manifest;
  std::filesystem::path eval_manifest;  // labelled target split; only read by evaluation
  std::filesystem::path output_dir = "run";
  // [selection]
  double initial_portion = 0.1;
  double portion_increment = 0.05;
  // [patches]; zero sizes mean half the image, zoomed back to full size
  std::size_t patches_per_image = 4;
  std::size_t patch_height = 0;
  std::size_t patch_width = 0;
  std::size_t output_height = 0;
  std::size_t output_width = 0;
  // [loss]
  double focal_gamma = 3.0;
  double focal_weight = 0.1;
  bool focal_masked = false;
  FilterMode filter = FilterMode::kDynamic;
  // [optim]
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // [run]
  std::size_t rounds = 4;
  std::size_t steps_per_round = 500;
  std::size_t source_steps = 1500;
  std::size_t source_images_per_step = 2;
  std::size_t target_images_per_step = 2;  // each contributes patches_per_image patches
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::filesystem::path init_checkpoint;
  bool write_archives = true;
  std::string label;  // selection-history label; derived from focal_weight when empty

  static RunConfig from_table(const ConfigTable& table);

  LossConfig loss() const;
  SelectionConfig selection(std::size_t classes, std::size_t round) const;
  std::string history_label() const;

  /// Throws ConfigError for out-of-range values. With `check_paths`, also
  /// requires the referenced manifests to exist.
  void validate(bool check_paths) const;

  nlohmann::json to_json() const;
};

}  // namespace lse
