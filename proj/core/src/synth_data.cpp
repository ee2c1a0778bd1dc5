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

#include "lse/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "lse/tensor_io.hpp"

namespace lse {
namespace {

using Color = std::array<float, 3>;

constexpr std::array<Color, kSceneClassCount> kPalette = {{
    {0.46f, 0.48f, 0.44f},  // background
    {0.26f, 0.26f, 0.30f},  // road
    {0.52f, 0.68f, 0.90f},  // sky
    {0.62f, 0.42f, 0.30f},  // building
    {0.78f, 0.16f, 0.18f},  // car
    {0.92f, 0.84f, 0.18f},  // sign
}};
constexpr Color kWindow = {0.86f, 0.80f, 0.62f};
constexpr Color kGlass = {0.20f, 0.24f, 0.32f};
constexpr Color kLane = {0.85f, 0.85f, 0.82f};

struct Canvas {
  std::size_t height;
  std::size_t width;
  std::vector<Color> color;
  LabelMap labels;

  Canvas(std::size_t h, std::size_t w) : height(h), width(w), color(h * w), labels({h, w}) {}

  void paint(std::size_t y, std::size_t x, std::uint8_t cls, const Color& c) {
    labels.at(y, x) = cls;
    color[y * width + x] = c;
  }
};

Color jitter(const Color& base, float amount, Rng& rng) {
  std::uniform_real_distribution<float> u(-amount, amount);
  return {base[0] + u(rng), base[1] + u(rng), base[2] + u(rng)};
}

Color mix(const Color& a, const Color& b, float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double log_uniform(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

std::size_t poisson(double rate, Rng& rng) {
  if (rate <= 0) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<int>(rate)(rng));
}

std::size_t uniform_index(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

void paint_bands(Canvas& canvas, std::size_t sky_end, std::size_t road_start, Rng& rng) {
  const Color sky = jitter(kPalette[kSky], 0.04f, rng);
  const Color ground = jitter(kPalette[kBackground], 0.04f, rng);
  const Color road = jitter(kPalette[kRoad], 0.03f, rng);
  const std::size_t lane_period = std::max<std::size_t>(8, canvas.width / 8);
  for (std::size_t y = 0; y < canvas.height; ++y) {
    for (std::size_t x = 0; x < canvas.width; ++x) {
      if (y < sky_end) {
        // Brighter towards the horizon.
        const float t = 0.25f * static_cast<float>(y) / static_cast<float>(std::max<std::size_t>(1, sky_end));
        canvas.paint(y, x, kSky, mix(sky, {0.85f, 0.9f, 0.95f}, t));
      } else if (y < road_start) {
        canvas.paint(y, x, kBackground, ground);
      } else {
        canvas.paint(y, x, kRoad, road);
      }
    }
  }
  // Dashed centre line, still labeled road.
  const std::size_t lane_y = road_start + (canvas.height - road_start) / 2;
  for (std::size_t x = 0; x < canvas.width; ++x) {
    if ((x % lane_period) < lane_period / 2 && lane_y < canvas.height) {
      canvas.paint(lane_y, x, kRoad, kLane);
    }
  }
}

void paint_building(Canvas& canvas, const DomainSpec& spec, std::size_t road_start, Rng& rng) {
  const double scale = log_uniform(spec.scale_min, spec.scale_max, rng);
  const auto bh = std::max<std::size_t>(3, static_cast<std::size_t>(scale * static_cast<double>(canvas.height)));
  const auto bw = std::max<std::size_t>(
      3, static_cast<std::size_t>(static_cast<double>(bh) * std::uniform_real_distribution<double>(0.5, 1.2)(rng)));
  const std::size_t bottom = road_start;
  const std::size_t top = bottom > bh ? bottom - bh : 0;
  const std::size_t left = uniform_index(0, canvas.width > bw ? canvas.width - bw : 0, rng);
  const Color wall = jitter(kPalette[kBuilding], 0.05f, rng);
  // Window grid whose pitch follows the building size.
  const std::size_t pitch = std::max<std::size_t>(2, bh / 5);
  for (std::size_t y = top; y < bottom; ++y) {
    for (std::size_t x = left; x < std::min(canvas.width, left + bw); ++x) {
      const std::size_t u = (y - top) % pitch;
      const std::size_t v = (x - left) % pitch;
      const bool window = pitch >= 3 && u >= pitch / 4 && u < (3 * pitch) / 4 && v >= pitch / 4 &&
                          v < (3 * pitch) / 4;
      canvas.paint(y, x, kBuilding, window ? kWindow : wall);
    }
  }
}

void paint_car(Canvas& canvas, const DomainSpec& spec, std::size_t road_start, Rng& rng) {
  const double scale = log_uniform(spec.scale_min, spec.scale_max, rng);
  const double ry = std::max(1.5, 0.25 * scale * static_cast<double>(canvas.height));
  const double rx = 2.0 * ry;
  const double cy = std::uniform_real_distribution<double>(static_cast<double>(road_start),
                                                           static_cast<double>(canvas.height))(rng);
  const double cx = std::uniform_real_distribution<double>(0.0, static_cast<double>(canvas.width))(rng);
  const Color body = jitter(kPalette[kCar], 0.05f, rng);
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - ry));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + ry));
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - rx));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + rx));
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y0); y <= y1 && y < static_cast<std::ptrdiff_t>(canvas.height); ++y) {
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x0); x <= x1 && x < static_cast<std::ptrdiff_t>(canvas.width); ++x) {
      const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
      const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
      if (dx * dx + dy * dy > 1.0) continue;
      // Glass band across the upper third of the body.
      const bool glass = dy < -0.35 && dy > -0.75 && std::abs(dx) < 0.55;
      canvas.paint(static_cast<std::size_t>(y), static_cast<std::size_t>(x), kCar, glass ? kGlass : body);
    }
  }
}

void paint_sign(Canvas& canvas, const DomainSpec& spec, std::size_t sky_end, std::size_t road_start, Rng& rng) {
  const double scale = log_uniform(spec.scale_min, spec.scale_max, rng);
  const auto side = std::max<std::size_t>(2, static_cast<std::size_t>(0.35 * scale * static_cast<double>(canvas.height)));
  const std::size_t lo = sky_end;
  const std::size_t hi = road_start > side ? road_start - side : lo;
  const std::size_t top = uniform_index(lo, hi, rng);
  const std::size_t left = uniform_index(0, canvas.width > side ? canvas.width - side : 0, rng);
  const Color face = jitter(kPalette[kSign], 0.04f, rng);
  for (std::size_t y = top; y < std::min(canvas.height, top + side); ++y) {
    for (std::size_t x = left; x < std::min(canvas.width, left + side); ++x) {
      canvas.paint(y, x, kSign, face);
    }
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

const char* scene_class_name(std::size_t c) {
  static constexpr std::array<const char*, kSceneClassCount> kNames = {"background", "road", "sky",
                                                                      "building", "car", "sign"};
  return c < kNames.size() ? kNames[c] : "unknown";
}

void DomainSpec::validate() const {
  if (classes != kSceneClassCount) throw ConfigError("the scene generator paints exactly 6 classes");
  if (height < 8 || width < 8) throw ConfigError("scene dims must be at least 8x8");
  for (double r : object_rate) {
    if (!(r > 0)) throw ConfigError("object rates must be positive");
  }
  if (!(scale_min > 0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw ConfigError("object scale range must satisfy 0 < min <= max <= 1");
  }
  for (float g : gain) {
    if (!(g > 0)) throw ConfigError("photometric gains must be positive");
  }
  if (!(noise_sigma >= 0)) throw ConfigError("noise sigma must be >= 0");
}

nlohmann::json DomainSpec::to_json() const {
  return {{"classes", classes},     {"height", height},         {"width", width},
          {"object_rate", object_rate}, {"scale_min", scale_min}, {"scale_max", scale_max},
          {"gain", gain},           {"offset", offset},         {"noise_sigma", noise_sigma},
          {"seed", seed}};
}

DomainSpec DomainSpec::from_json(const nlohmann::json& doc) {
  DomainSpec s;
  try {
    s.classes = doc.at("classes").get<std::size_t>();
    s.height = doc.at("height").get<std::size_t>();
    s.width = doc.at("width").get<std::size_t>();
    s.object_rate = doc.at("object_rate").get<std::array<double, 3>>();
    s.scale_min = doc.at("scale_min").get<double>();
    s.scale_max = doc.at("scale_max").get<double>();
    s.gain = doc.at("gain").get<std::array<float, 3>>();
    s.offset = doc.at("offset").get<std::array<float, 3>>();
    s.noise_sigma = doc.at("noise_sigma").get<float>();
    s.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad domain spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string DomainSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return hex64(h);
}

DomainPair domain_preset(const std::string& name, std::uint64_t seed) {
  DomainPair pair;
  if (name == "default") {
    pair.source.height = 128;
    pair.source.width = 256;
  } else if (name == "toy") {
    pair.source.height = 32;
    pair.source.width = 64;
  } else {
    throw ConfigError("unknown domain preset '" + name + "' (expected 'default' or 'toy')");
  }
  pair.source.seed = derive_seed(seed, {0x736f75ull});
  pair.source.scale_min = 0.10;
  pair.source.scale_max = 0.35;
  pair.target = pair.source;
  pair.target.seed = derive_seed(seed, {0x746172ull});
  pair.target.gain = {0.90f, 0.96f, 1.05f};
  pair.target.offset = {0.04f, 0.02f, -0.02f};
  pair.target.noise_sigma = 0.04f;
  // Source buildings stay below the height at which the window grid appears;
  // the larger target objects show it.
  pair.target.scale_min = 0.15;
  pair.target.scale_max = 0.70;
  return pair;
}

DomainSpec with_photometric(const DomainSpec& spec, const DomainSpec& other) {
  DomainSpec out = spec;
  out.gain = other.gain;
  out.offset = other.offset;
  out.noise_sigma = other.noise_sigma;
  return out;
}

Scene generate_scene(const DomainSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  Canvas canvas(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto sky_end = static_cast<std::size_t>(static_cast<double>(h) * (0.20 + 0.15 * u(rng)));
  const auto road_start = static_cast<std::size_t>(static_cast<double>(h) * (0.60 + 0.15 * u(rng)));
  paint_bands(canvas, sky_end, road_start, rng);

  const std::size_t buildings = poisson(spec.object_rate[0], rng);
  for (std::size_t i = 0; i < buildings; ++i) paint_building(canvas, spec, road_start, rng);
  const std::size_t cars = poisson(spec.object_rate[1], rng);
  for (std::size_t i = 0; i < cars; ++i) paint_car(canvas, spec, road_start, rng);
  const std::size_t signs = poisson(spec.object_rate[2], rng);
  for (std::size_t i = 0; i < signs; ++i) paint_sign(canvas, spec, sky_end, road_start, rng);

  Scene scene{Image({3, h, w}), std::move(canvas.labels)};
  std::normal_distribution<float> noise(0.0f, 1.0f);
  const float brightness = std::uniform_real_distribution<float>(0.92f, 1.08f)(rng);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t px = 0; px < h * w; ++px) {
      float v = canvas.color[px][c] * brightness;
      v = spec.gain[c] * v + spec.offset[c];
      if (spec.noise_sigma > 0) v += spec.noise_sigma * noise(rng);
      scene.image[c * h * w + px] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return scene;
}

Scene generate_scene(const DomainSpec& spec, std::size_t index) {
  Rng rng(derive_seed(spec.seed, {index}));
  return generate_scene(spec, rng);
}

std::filesystem::path DatasetManifest::label_path(const ManifestItem& item) const {
  if (!item.labels) throw ConfigError("manifest item " + std::to_string(item.id) + " has no labels");
  return base_dir / *item.labels;
}

DatasetManifest generate_dataset(const DomainSpec& spec, std::size_t n, const std::filesystem::path& out_dir,
                                 const std::string& name, const std::string& domain, ImageId first_id) {
  spec.validate();
  if (domain != "source" && domain != "target") throw ConfigError("domain must be 'source' or 'target'");
  ensure_dir(out_dir / name);
  DatasetManifest manifest;
  manifest.domain = domain;
  manifest.spec_hash = spec.hash();
  manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < n; ++i) {
    const Scene scene = generate_scene(spec, i);
    const ImageId id = first_id + static_cast<ImageId>(i);
    const std::string stem = name + "/" + std::to_string(id);
    write_tensor(out_dir / (stem + "_image.lst"), scene.image);
    write_tensor(out_dir / (stem + "_labels.lst"), scene.labels);
    manifest.items.push_back({id, stem + "_image.lst", stem + "_labels.lst"});
  }
  write_manifest(out_dir / (name + ".json"), manifest);
  return manifest;
}

BenchmarkManifests generate_benchmark(const std::string& preset, std::size_t n, std::size_t n_val,
                                      std::uint64_t seed, const std::filesystem::path& out_dir) {
  const DomainPair pair = domain_preset(preset, seed);
  DomainSpec val = pair.target;
  val.seed = derive_seed(pair.target.seed, {0x76616cull});
  ensure_dir(out_dir);
  BenchmarkManifests out{generate_dataset(pair.source, n, out_dir, "source", "source"),
                         generate_dataset(pair.target, n, out_dir, "target", "target"),
                         generate_dataset(val, n_val, out_dir, "target_val", "target", static_cast<ImageId>(n))};
  const nlohmann::json doc = {{"preset", preset},
                              {"seed", seed},
                              {"source", pair.source.to_json()},
                              {"target", pair.target.to_json()},
                              {"target_val", val.to_json()}};
  std::ofstream f(out_dir / "domains.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (out_dir / "domains.json").string());
  f << doc.dump(2) << '\n';
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : manifest.items) {
    nlohmann::json entry = {{"id", item.id}, {"image", item.image}};
    entry["labels"] = item.labels ? nlohmann::json(*item.labels) : nlohmann::json(nullptr);
    items.push_back(std::move(entry));
  }
  const nlohmann::json doc = {{"domain", manifest.domain}, {"spec_hash", manifest.spec_hash}, {"items", items}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  try {
    const auto doc = nlohmann::json::parse(in);
    manifest.domain = doc.at("domain").get<std::string>();
    manifest.spec_hash = doc.at("spec_hash").get<std::string>();
    for (const auto& entry : doc.at("items")) {
      ManifestItem item;
      item.id = entry.at("id").get<ImageId>();
      item.image = entry.at("image").get<std::string>();
      if (entry.contains("labels") && !entry.at("labels").is_null()) {
        item.labels = entry.at("labels").get<std::string>();
      }
      manifest.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad manifest " + path.string() + ": " + e.what());
  }
  if (manifest.domain != "source" && manifest.domain != "target") {
    throw ConfigError("manifest " + path.string() + " has unknown domain '" + manifest.domain + "'");
  }
  std::vector<ImageId> ids;
  for (const auto& item : manifest.items) {
    if (manifest.domain == "source" && !item.labels) {
      throw ConfigError("source manifest item " + std::to_string(item.id) + " has no labels");
    }
    ids.push_back(item.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigError("manifest " + path.string() + " has duplicate ids");
  }
  manifest.base_dir = path.parent_path();
  return manifest;
}

UnlabeledSet UnlabeledSet::from_manifest(const DatasetManifest& manifest) {
  if (manifest.domain != "target") {
    throw ConfigError("adaptation expects a manifest tagged 'target', got '" + manifest.domain + "'");
  }
  UnlabeledSet set;
  for (const auto& item : manifest.items) {
    set.ids_.push_back(item.id);
    set.images_.push_back(read_tensor_as<float>(manifest.image_path(item)));
  }
  return set;
}

std::size_t UnlabeledSet::index_of(ImageId id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw ValueError("unknown target image id " + std::to_string(id));
  return static_cast<std::size_t>(it - ids_.begin());
}

const Image& UnlabeledSet::image(ImageId id) const { return images_[index_of(id)]; }

}  // namespace lse
