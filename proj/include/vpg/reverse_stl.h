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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpg/config_reader.h"
#include "vpg/feature_store.h"
#include "vpg/visual_index.h"

namespace vpg {

// One scene found through its best-matching object.
struct SceneCandidate {
  ImageSignature scene;
  ObjectIndexEntry best_object;  // embedding left empty
  float score = 0;               // negative euclidean distance; higher is better
  NearDupSignature near_dup;
  Embedding scene_embedding;  // full-image embedding, used for diversity

  friend bool operator==(const SceneCandidate&, const SceneCandidate&) = default;
};

struct RelevanceCalibration {
  double threshold = 0;
  size_t calibration_size = 0;  // number of queries pooled
  double percentile = 0.75;

  nlohmann::json to_json() const;
  static RelevanceCalibration from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RelevanceCalibration load(const std::filesystem::path& path);
};

inline constexpr size_t kMinCalibrationQueries = 100;

struct ReverseConfig {
  size_t k_raw = 150;
  double percentile = 0.75;
  size_t calibration_size = 200;  // queries sampled by `vpg calibrate`
  size_t calibration_top = 5;     // scores pooled per query
  int hamming_max = kDefaultNearDupHammingMax;
  double lambda = 0.5;
  size_t n_out = 10;

  static ReverseConfig read(ConfigReader& reader, const std::string& prefix = "");
};

// Keeps candidates with score >= threshold, order preserved.
std::vector<SceneCandidate> relevance_filter(std::span<const SceneCandidate> cands, const RelevanceCalibration& cal);

// Greedy front-to-back: drops a candidate whose scene equals, or whose near-dup
// signature lies within hamming_max of, an already kept candidate.
std::vector<SceneCandidate> dedup(std::span<const SceneCandidate> cands, int hamming_max);

// Pins cands[0], then repeatedly picks the candidate maximizing
// score - lambda * max similarity to the picked set, where similarity is the
// negative euclidean distance between scene embeddings. Ties keep input order.
std::vector<SceneCandidate> rerank(std::span<const SceneCandidate> cands, size_t n_out, double lambda);

// Pooled-percentile threshold from per-query score lists (each descending).
RelevanceCalibration calibrate_from_scores(std::span<const std::vector<float>> per_query, double percentile,
                                           size_t top = 5);

struct ReverseTrace {
  size_t retrieved = 0;
  size_t after_relevance = 0;
  size_t after_dedup = 0;
  size_t returned = 0;
};

struct ReverseResult {
  ImageSignature product;
  std::vector<SceneCandidate> scenes;
  ReverseTrace trace;
  bool store_hit = false;

  nlohmann::json to_json() const;
};

// Product -> scenes. Reads product embeddings from the store, falling back to
// the extractor on a miss. Stateless over the immutable index, so any number
// of queries may run concurrently.
class ReverseStl {
 public:
  ReverseStl(const VisualIndex& index, FeatureStore& store, Extractor extractor, ReverseConfig config = {});

  // ANN top-k_raw objects grouped by parent scene (best object wins), sorted
  // by descending score then signature. Throws UnknownEntityError when the
  // product's embedding cannot be obtained.
  std::vector<SceneCandidate> retrieve_scenes(const ImageSignature& product, size_t k_raw) const;
  std::vector<SceneCandidate> retrieve_scenes(const ImageSignature& product) const {
    return retrieve_scenes(product, config_.k_raw);
  }

  // Throws InsufficientCalibrationData below kMinCalibrationQueries queries.
  RelevanceCalibration calibrate(std::span<const ImageSignature> queries, double percentile) const;

  ReverseResult query(const ImageSignature& product, const RelevanceCalibration& cal) const;

  const ReverseConfig& config() const { return config_; }

 private:
  Embedding product_embedding(const ImageSignature& product, bool* hit) const;
  std::vector<SceneCandidate> search_scenes(const Embedding& q, size_t k_raw) const;

  const VisualIndex& index_;
  FeatureStore& store_;
  Extractor extractor_;
  ReverseConfig config_;
};

}  // namespace vpg
