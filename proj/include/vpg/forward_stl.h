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

#include <atomic>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vpg/clock.h"
#include "vpg/config_reader.h"
#include "vpg/feature_store.h"
#include "vpg/ttl_cache.h"
#include "vpg/visual_index.h"

namespace vpg {

enum class Gender : uint8_t { kUnspecified = 0, kFemale = 1, kMale = 2, kNonBinary = 3 };

std::string_view gender_name(Gender g);
Gender gender_from_name(std::string_view name);

// Who is asking. Only part of the cache identity; ranking ignores it.
struct UserContext {
  Gender gender = Gender::kUnspecified;
  std::string country = "unspecified";  // ISO 3166 alpha-2 or "unspecified"

  // Parses "gender=f,country=US"; missing fields stay unspecified.
  static UserContext parse(std::string_view text);
  // Throws InvalidArgument for a malformed country code.
  static UserContext make(std::string_view gender, std::string_view country);

  nlohmann::json to_json() const;
  friend bool operator==(const UserContext&, const UserContext&) = default;
};

struct CacheKey {
  ImageSignature scene;
  UserContext ctx;
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheKeyHash {
  size_t operator()(const CacheKey& k) const noexcept;
};

struct ForwardConfig {
  size_t max_objects = 4;
  size_t per_object_k = 12;
  size_t n_out = 3;
  int64_t ttl_seconds = 7200;
  size_t cache_capacity = 10000;
  size_t parallelism = 4;
  size_t max_batch = 5;

  static ForwardConfig read(ConfigReader& reader, const std::string& prefix = "");
};

struct ProductCandidate {
  ProductEntry product;  // embedding left empty
  float distance = 0;
  uint32_t object_rank = 0;  // position of the source object in decomposition order

  friend bool operator==(const ProductCandidate&, const ProductCandidate&) = default;
};

// The <= max_objects highest-confidence objects, descending; equal
// confidences keep ordinal order.
std::vector<DetectedObject> decompose_scene(const SceneEntry& scene, size_t max_objects = 4);

// Top per_object_k products per object in one batched index pass. Result i
// belongs to objects[i].
std::vector<std::vector<ProductCandidate>> retrieve_products(std::span<const DetectedObject> objects,
                                                             const VisualIndex& index, size_t per_object_k = 12);

// Drops unsafe candidates and candidates whose category domain differs from
// the source object's. Order is preserved.
std::vector<std::vector<ProductCandidate>> filter_candidates(std::span<const std::vector<ProductCandidate>> cands,
                                                             std::span<const DetectedObject> objects);

// Round r takes each object's r-th candidate in object order, skipping
// exhausted lists and products already emitted; stops at n_out.
std::vector<ProductCandidate> round_robin_merge(std::span<const std::vector<ProductCandidate>> cands,
                                                size_t n_out = 3);

struct ForwardResult {
  ImageSignature scene;
  UserContext ctx;
  std::vector<ProductCandidate> products;
  bool served_from_cache = false;

  nlohmann::json to_json() const;
};

struct BatchItem {
  std::optional<ForwardResult> result;
  std::string error;  // set when result is empty
};

struct ForwardMetrics {
  uint64_t pipeline_executions = 0;
  uint64_t index_queries = 0;   // batched product-index passes
  uint64_t objects_queried = 0;
  CacheStats cache;
};

// Scene -> products with a TTL cache keyed by (scene, user context). The clock
// is injected so expiry can be tested deterministically.
class ForwardStl {
 public:
  ForwardStl(const VisualIndex& index, FeatureStore& store, Extractor extractor, ForwardConfig config = {},
             Clock clock = system_clock());

  // decompose -> retrieve -> filter -> merge, bypassing the cache. Throws
  // UnknownEntityError when the scene cannot be obtained.
  std::vector<ProductCandidate> compute(const ImageSignature& scene);

  // Serves a fresh cache entry when there is one; otherwise computes and
  // stores it. Concurrent misses on one key share a single computation.
  ForwardResult lookup(const ImageSignature& scene, const UserContext& ctx);

  // Up to max_batch scenes; misses run concurrently with bounded parallelism.
  // Per-scene failures are reported in the item, not thrown.
  std::map<ImageSignature, BatchItem> batch(std::span<const ImageSignature> scenes, const UserContext& ctx);

  std::vector<DetectedObject> decompose(const ImageSignature& scene);

  ForwardMetrics metrics() const;
  const ForwardConfig& config() const { return config_; }

 private:
  const VisualIndex& index_;
  FeatureStore& store_;
  Extractor extractor_;
  ForwardConfig config_;
  Clock clock_;
  TtlLruCache<CacheKey, std::vector<ProductCandidate>, CacheKeyHash> cache_;

  std::mutex inflight_mu_;
  std::unordered_map<CacheKey, std::shared_future<std::vector<ProductCandidate>>, CacheKeyHash> inflight_;

  std::atomic<uint64_t> pipeline_executions_{0};
  std::atomic<uint64_t> index_queries_{0};
  std::atomic<uint64_t> objects_queried_{0};
};

}  // namespace vpg
