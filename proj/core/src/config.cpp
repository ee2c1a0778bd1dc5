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

#include "lse/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

namespace lse {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quote) {
      if (ch == '\\' && quote == '"') {
        ++i;
      } else if (ch == quote) {
        quote = 0;
      }
    } else if (ch == '"' || ch == '\'') {
      quote = ch;
    } else if (ch == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char ch : key) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) return false;
  }
  return true;
}

std::optional<ConfigValue> parse_value(const std::string& raw) {
  const std::string v = trim(raw);
  if (v.empty()) return std::nullopt;
  if (v == "true") return ConfigValue{true};
  if (v == "false") return ConfigValue{false};
  if (v.size() >= 2 && v.front() == '\'' && v.back() == '\'') return ConfigValue{v.substr(1, v.size() - 2)};
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] != '\\') {
        out += v[i];
        continue;
      }
      if (i + 2 >= v.size()) return std::nullopt;
      switch (v[++i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: return std::nullopt;
      }
    }
    return ConfigValue{out};
  }
  std::string digits;
  for (char ch : v) {
    if (ch != '_') digits += ch;
  }
  std::int64_t i = 0;
  auto [ip, iec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
  if (iec == std::errc() && ip == digits.data() + digits.size()) return ConfigValue{i};
  // std::from_chars for double is unavailable on older toolchains.
  std::istringstream ss(digits);
  ss.imbue(std::locale::classic());
  double d = 0;
  ss >> d;
  if (!ss.fail() && ss.eof() && std::isfinite(d)) return ConfigValue{d};
  return std::nullopt;
}

struct Reader {
  const ConfigTable& table;
  std::set<std::string> used;

  const ConfigValue* find(const std::string& section, const std::string& key) {
    const auto s = table.find(section);
    if (s == table.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used.insert(section + "." + key);
    return &k->second;
  }

  [[noreturn]] static void type_error(const std::string& section, const std::string& key, const char* want) {
    throw ConfigError("config key " + section + "." + key + " must be " + want);
  }

  void get(const std::string& section, const std::string& key, double& out) {
    if (const auto* v = find(section, key)) {
      if (const auto* d = std::get_if<double>(v)) out = *d;
      else if (const auto* i = std::get_if<std::int64_t>(v)) out = static_cast<double>(*i);
      else type_error(section, key, "a number");
    }
  }

  void get(const std::string& section, const std::string& key, std::size_t& out) {
    if (const auto* v = find(section, key)) {
      const auto* i = std::get_if<std::int64_t>(v);
      if (i == nullptr || *i < 0) type_error(section, key, "a non-negative integer");
      out = static_cast<std::size_t>(*i);
    }
  }

  void get(const std::string& section, const std::string& key, bool& out) {
    if (const auto* v = find(section, key)) {
      const auto* b = std::get_if<bool>(v);
      if (b == nullptr) type_error(section, key, "a boolean");
      out = *b;
    }
  }

  void get(const std::string& section, const std::string& key, std::string& out) {
    if (const auto* v = find(section, key)) {
      const auto* s = std::get_if<std::string>(v);
      if (s == nullptr) type_error(section, key, "a string");
      out = *s;
    }
  }

  void get(const std::string& section, const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    get(section, key, s);
    out = s;
  }
};

FilterMode parse_filter_mode(const std::string& s) {
  if (s == "dynamic") return FilterMode::kDynamic;
  if (s == "all") return FilterMode::kAll;
  if (s == "none") return FilterMode::kNone;
  throw ConfigError("loss.filter must be 'dynamic', 'all' or 'none', got '" + s + "'");
}

}  // namespace

ConfigTable parse_config(const std::string& text, const std::string& origin) {
  ConfigTable table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_key(section)) fail("bad section name '" + section + "'");
      table[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) fail("bad key '" + key + "'");
    if (section.empty()) fail("key '" + key + "' outside of a section");
    const auto value = parse_value(s.substr(eq + 1));
    if (!value) fail("cannot parse value for '" + key + "'");
    if (!table[section].emplace(key, *value).second) fail("duplicate key '" + key + "'");
  }
  return table;
}

ConfigTable read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_override(ConfigTable& table, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string section = trim(assignment.substr(0, dot));
  const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
  if (!valid_key(section) || !valid_key(key)) throw ConfigError("bad override target in '" + assignment + "'");
  const std::string raw = assignment.substr(eq + 1);
  const auto value = parse_value(raw);
  table[section][key] = value ? *value : ConfigValue{trim(raw)};
}

const char* to_string(FilterMode mode) {
  switch (mode) {
    case FilterMode::kDynamic: return "dynamic";
    case FilterMode::kAll: return "all";
    case FilterMode::kNone: return "none";
  }
  return "dynamic";
}

RunConfig RunConfig::from_table(const ConfigTable& table) {
  RunConfig c;
  Reader r{table, {}};
  r.get("data", "source_manifest", c.source_manifest);
  r.get("data", "target_manifest", c.target_manifest);
  r.get("data", "eval_manifest", c.eval_manifest);
  r.get("data", "output_dir", c.output_dir);
  r.get("selection", "initial_portion", c.initial_portion);
  r.get("selection", "portion_increment", c.portion_increment);
  r.get("patches", "patches_per_image", c.patches_per_image);
  r.get("patches", "patch_height", c.patch_height);
  r.get("patches", "patch_width", c.patch_width);
  r.get("patches", "output_height", c.output_height);
  r.get("patches", "output_width", c.output_width);
  r.get("loss", "focal_gamma", c.focal_gamma);
  r.get("loss", "focal_weight", c.focal_weight);
  r.get("loss", "focal_masked", c.focal_masked);
  std::string filter = to_string(c.filter);
  r.get("loss", "filter", filter);
  c.filter = parse_filter_mode(filter);
  r.get("optim", "learning_rate", c.learning_rate);
  r.get("optim", "beta1", c.beta1);
  r.get("optim", "beta2", c.beta2);
  r.get("optim", "epsilon", c.epsilon);
  r.get("run", "rounds", c.rounds);
  r.get("run", "steps_per_round", c.steps_per_round);
  r.get("run", "source_steps", c.source_steps);
  r.get("run", "source_images_per_step", c.source_images_per_step);
  r.get("run", "target_images_per_step", c.target_images_per_step);
  r.get("run", "seed", c.seed);
  r.get("run", "deterministic", c.deterministic);
  r.get("run", "init_checkpoint", c.init_checkpoint);
  r.get("run", "write_archives", c.write_archives);
  r.get("run", "label", c.label);

  for (const auto& [section, keys] : table) {
    for (const auto& [key, value] : keys) {
      if (!r.used.contains(section + "." + key)) {
        throw ConfigError("unknown config key " + section + "." + key);
      }
    }
  }
  c.validate(false);
  return c;
}

LossConfig RunConfig::loss() const {
  LossConfig l;
  l.focal_gamma = focal_gamma;
  l.focal_weight = focal_weight;
  l.focal_masked = focal_masked;
  return l;
}

SelectionConfig RunConfig::selection(std::size_t classes, std::size_t round) const {
  return {initial_portion, portion_increment, classes, round};
}

std::string RunConfig::history_label() const {
  if (!label.empty()) return label;
  return focal_weight > 0 ? "focal" : "no_focal";
}

void RunConfig::validate(bool check_paths) const {
  if (!(initial_portion > 0 && initial_portion <= 1)) throw ConfigError("selection.initial_portion must be in (0, 1]");
  if (!(portion_increment >= 0)) throw ConfigError("selection.portion_increment must be >= 0");
  if (patches_per_image == 0) throw ConfigError("patches.patches_per_image must be >= 1");
  loss().validate();
  if (!(learning_rate > 0)) throw ConfigError("optim.learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("optim betas must be in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("optim.epsilon must be > 0");
  if (rounds == 0) throw ConfigError("run.rounds must be >= 1");
  if (source_images_per_step == 0) throw ConfigError("run.source_images_per_step must be >= 1");
  if (!check_paths) return;
  for (const auto* p : {&source_manifest, &target_manifest}) {
    if (p->empty() || !std::filesystem::exists(*p)) {
      throw ConfigError("manifest '" + p->string() + "' does not exist");
    }
  }
  if (!eval_manifest.empty() && !std::filesystem::exists(eval_manifest)) {
    throw ConfigError("manifest '" + eval_manifest.string() + "' does not exist");
  }
  if (!init_checkpoint.empty() && !std::filesystem::exists(init_checkpoint)) {
    throw ConfigError("checkpoint '" + init_checkpoint.string() + "' does not exist");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"data",
       {{"source_manifest", source_manifest.string()},
        {"target_manifest", target_manifest.string()},
        {"eval_manifest", eval_manifest.string()},
        {"output_dir", output_dir.string()}}},
      {"selection", {{"initial_portion", initial_portion}, {"portion_increment", portion_increment}}},
      {"patches",
       {{"patches_per_image", patches_per_image},
        {"patch_height", patch_height},
        {"patch_width", patch_width},
        {"output_height", output_height},
        {"output_width", output_width}}},
      {"loss",
       {{"focal_gamma", focal_gamma},
        {"focal_weight", focal_weight},
        {"focal_masked", focal_masked},
        {"filter", to_string(filter)}}},
      {"optim", {{"learning_rate", learning_rate}, {"beta1", beta1}, {"beta2", beta2}, {"epsilon", epsilon}}},
      {"run",
       {{"rounds", rounds},
        {"steps_per_round", steps_per_round},
        {"source_steps", source_steps},
        {"source_images_per_step", source_images_per_step},
        {"target_images_per_step", target_images_per_step},
        {"seed", seed},
        {"deterministic", deterministic},
        {"init_checkpoint", init_checkpoint.string()},
        {"write_archives", write_archives},
        {"label", history_label()}}},
  };
}

}  // namespace lse
