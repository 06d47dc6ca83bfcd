// Copyright 2026 The VPG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vpg/catalog.h"
#include "vpg/config_reader.h"
#include "vpg/scene.h"
#include "vpg/types.h"

namespace vpg {

// Detector corruption knobs, used to exercise NMS and the corpus filters.
struct CorruptionConfig {
  double duplicate_rate = 0.0;       // extra overlapping box (IoU >= 0.7) per object
  double false_positive_rate = 0.0;  // spurious low-confidence box per object
};

struct WorldConfig {
  uint64_t seed = 42;
  size_t dimension = kDefaultDimension;
  size_t products = 1000;
  size_t scenes = 10000;
  // Expected L2 norm of the noise added to a unit latent before renormalizing.
  double noise_sigma = 0.0;
  // Minimum pairwise distance between product latents, enforced by redraws.
  double min_separation = 1.0;
  size_t min_objects = 3;
  size_t max_objects = 6;
  double fashion_fraction = 0.5;
  double near_duplicate_rate = 0.02;
  double non_inspirational_rate = 0.05;
  double grayscale_rate = 0.02;
  double collage_rate = 0.02;
  double low_resolution_rate = 0.02;
  double blurry_rate = 0.02;
  double unsafe_rate = 0.0;
  double out_of_stock_rate = 0.0;
  double illegitimate_rate = 0.0;
  CorruptionConfig corruption;

  // Reads the "world" keys; prefix lets the engine config nest them ("world.").
  static WorldConfig read(ConfigReader& reader, const std::string& prefix = "");
  static WorldConfig from_file(const std::filesystem::path& path);
};

struct ProductTruth {
  uint32_t id = 0;
  ImageSignature signature;
  Category category;
  Embedding latent;  // unit norm
  bool in_stock = true;
  bool legitimate_domain = true;
  bool safe = true;
};

struct ObjectTruth {
  uint32_t product_id = 0;
  BoundingBox box;
  Category category;
};

struct SceneTruth {
  uint32_t id = 0;
  ImageSignature signature;
  std::vector<ObjectTruth> objects;
  ImageMetadata metadata;
  std::optional<uint32_t> near_duplicate_of;
};

struct RawDetection {
  BoundingBox box;
  std::map<Category, float> scores;  // per-class scores in [0, 1]
  float confidence = 0;
  Embedding embedding;
  // Ground-truth object ordinal this detection came from; -1 for false positives.
  int source_object = -1;
};

// Deterministic stand-in for the detector and embedder. Every output is a pure
// function of (config, key).
class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldConfig config);

  const WorldConfig& config() const { return config_; }
  size_t dimension() const { return config_.dimension; }
  const std::vector<ProductTruth>& products() const { return products_; }
  const std::vector<SceneTruth>& scenes() const { return scenes_; }

  const ProductTruth& product(uint32_t id) const { return products_.at(id); }
  const ProductTruth* find_product(const ImageSignature& sig) const;
  const SceneTruth* find_scene(const ImageSignature& sig) const;
  // Product depicted by the object at `box` in scene `sig`, if any.
  std::optional<uint32_t> product_at(const ImageSignature& sig, const BoundingBox& box) const;

  // Full-image embedding of a product or scene image.
  Embedding embed(const ImageSignature& sig) const;
  // Embedding of a crop; the box must match a ground-truth object.
  Embedding embed(const ImageSignature& sig, const BoundingBox& box) const;

  std::vector<RawDetection> detect_raw(const SceneTruth& scene, const CorruptionConfig& corruption) const;
  std::vector<DetectedObject> detect(const SceneTruth& scene) const;
  std::vector<DetectedObject> detect(const SceneTruth& scene, const CorruptionConfig& corruption) const;

  SceneEntry scene_entry(const SceneTruth& scene) const;
  ProductEntry product_entry(const ProductTruth& product) const;
  std::vector<SceneEntry> scene_entries() const;
  std::vector<ProductEntry> product_entries() const;

  // Feature extraction for any known image; the online fallback path. Product
  // images yield an entry with no objects.
  SceneEntry extract(const ImageSignature& sig) const;

  // Ground-truth dump consumed by retrieval evaluation.
  nlohmann::json truth_json_line(const ProductTruth& p) const;
  nlohmann::json truth_json_line(const SceneTruth& s) const;
  void write_truth_jsonl(const std::filesystem::path& path) const;

 private:
  void generate_products();
  void generate_scenes();
  Embedding noisy(const Embedding& latent, uint64_t noise_seed) const;
  Embedding scene_latent(const SceneTruth& scene) const;

  WorldConfig config_;
  std::vector<ProductTruth> products_;
  std::vector<SceneTruth> scenes_;
  std::unordered_map<ImageSignature, uint32_t> product_by_sig_;
  std::unordered_map<ImageSignature, uint32_t> scene_by_sig_;
};

// Ground truth read back from the truth JSONL file.
struct WorldTruth {
  std::unordered_map<ImageSignature, uint32_t> product_of_image;  // product images
  std::unordered_map<ImageSignature, std::vector<uint32_t>> scene_products;
  std::unordered_map<uint32_t, Category> category_of;
  std::unordered_map<uint32_t, Embedding> latent_of;

  static WorldTruth read_jsonl(const std::filesystem::path& path);
  static WorldTruth from_world(const SyntheticWorld& world);
};

}  // namespace vpg
