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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lse/rng.hpp"
#include "lse/selection.hpp"
#include "lse/tensor.hpp"

namespace lse {

/// Class ids painted by the scene generator.
enum SceneClass : std::uint8_t {
  kBackground = 0,
  kRoad = 1,
  kSky = 2,
  kBuilding = 3,
  kCar = 4,
  kSign = 5,
  kSceneClassCount = 6,
};

const char* scene_class_name(std::size_t c);

/// Parameters of one procedural road-scene domain.
struct DomainSpec {
  std::size_t classes = kSceneClassCount;
  std::size_t height = 128;
  std::size_t width = 256;
  /// Expected objects per image for building, car and sign (Poisson rates).
  std::array<double, 3> object_rate = {2.0, 1.5, 0.3};
  /// Object size as a fraction of image height, drawn log-uniformly.
  double scale_min = 0.12;
  double scale_max = 0.40;
  std::array<float, 3> gain = {1.0f, 1.0f, 1.0f};
  std::array<float, 3> offset = {0.0f, 0.0f, 0.0f};
  float noise_sigma = 0.03f;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static DomainSpec from_json(const nlohmann::json& doc);
  /// Hex FNV-1a digest of the canonical JSON form.
  std::string hash() const;
};

/// Source/target spec pair for a named preset ("default" at 128x256, "toy"
/// at 32x64). The target differs by photometric shift, noise and object scale.
struct DomainPair {
  DomainSpec source;
  DomainSpec target;
};

DomainPair domain_preset(const std::string& name, std::uint64_t seed);

/// Same spec with the photometric shift and noise of `other`.
DomainSpec with_photometric(const DomainSpec& spec, const DomainSpec& other);

struct Scene {
  Image image;
  LabelMap labels;
};

Scene generate_scene(const DomainSpec& spec, Rng& rng);

/// Scene `index` of the dataset defined by `spec` (seeded by spec.seed and index).
Scene generate_scene(const DomainSpec& spec, std::size_t index);

struct ManifestItem {
  ImageId id = 0;
  std::string image;                  // relative to the manifest directory
  std::optional<std::string> labels;  // relative to the manifest directory
};

struct DatasetManifest {
  std::string domain;  // "source" or "target"
  std::string spec_hash;
  std::vector<ManifestItem> items;
  std::filesystem::path base_dir;  // directory holding the manifest file

  std::filesystem::path image_path(const ManifestItem& item) const { return base_dir / item.image; }
  std::filesystem::path label_path(const ManifestItem& item) const;
};

/// Writes `n` scenes as `.lst` files under out_dir/<name>/ and the manifest
/// as out_dir/<name>.json. Ids start at `first_id`.
DatasetManifest generate_dataset(const DomainSpec& spec, std::size_t n, const std::filesystem::path& out_dir,
                                 const std::string& name, const std::string& domain, ImageId first_id = 0);

struct BenchmarkManifests {
  DatasetManifest source;
  DatasetManifest target;      // adaptation split
  DatasetManifest target_val;  // labelled split for evaluation
};

/// Writes source.json, target.json and target_val.json (n, n and n_val
/// scenes) plus domains.json with the three specs under out_dir.
BenchmarkManifests generate_benchmark(const std::string& preset, std::size_t n, std::size_t n_val,
                                      std::uint64_t seed, const std::filesystem::path& out_dir);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Target images for adaptation. Label paths are dropped when loading, so
/// nothing downstream of this type can reach target ground truth.
class UnlabeledSet {
 public:
  /// Throws ConfigError unless the manifest is tagged "target".
  static UnlabeledSet from_manifest(const DatasetManifest& manifest);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::vector<ImageId>& ids() const noexcept { return ids_; }
  const Image& image(ImageId id) const;
  std::size_t index_of(ImageId id) const;

 private:
  std::vector<ImageId> ids_;
  std::vector<Image> images_;
};

}  // namespace lse
