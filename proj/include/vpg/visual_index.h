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

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vpg/ann_index.h"
#include "vpg/catalog.h"
#include "vpg/embedding_ops.h"
#include "vpg/feature_store.h"
#include "vpg/object_index.h"

namespace vpg {

// Parent-scene data needed at serving time (dedup and diversity rerank).
struct SceneInfo {
  ImageSignature signature;
  Embedding full_embedding;
  NearDupSignature near_dup;
  Domain domain = Domain::kFashion;
};

struct IndexBuildOptions {
  FilterConfig filters;
  HnswParams hnsw;
  uint64_t near_dup_seed = kDefaultNearDupSeed;
};

// Everything the two retrieval directions read: the object ANN index with its
// per-object metadata and parent scenes, and the product ANN index over the
// eligible catalog. Immutable once built or loaded. Vectors are quantized to
// half precision at build time, so a loaded index answers exactly like the
// one that was saved.
//
// Directory layout: objects.vpga, objects.jsonl, scenes.jsonl, products.vpga,
// products.jsonl, report.json.
class VisualIndex {
 public:
  // Indexes every store entry carrying image metadata (the scene corpus) that
  // passes the filters, plus the eligible products. Later catalog rows win
  // over earlier rows with the same signature.
  static VisualIndex build(const FeatureStore& store, std::span<const ProductEntry> catalog,
                           const IndexBuildOptions& options);
  static VisualIndex build(std::span<const SceneEntry> scenes, std::span<const ProductEntry> catalog,
                           const IndexBuildOptions& options);

  void save(const std::filesystem::path& dir) const;
  static VisualIndex load(const std::filesystem::path& dir);

  const HnswIndex& objects() const { return *objects_; }
  const HnswIndex& products() const { return *products_; }
  size_t object_count() const { return object_meta_.size(); }
  size_t scene_count() const { return scenes_.size(); }
  size_t product_count() const { return catalog_.size(); }

  // Object metadata by ANN id; the embedding is read back from the index.
  ObjectIndexEntry object(uint32_t id) const;
  const ObjectIndexEntry& object_meta(uint32_t id) const { return object_meta_.at(id); }
  const SceneInfo* scene(const ImageSignature& sig) const;
  const ProductEntry& product(uint32_t id) const { return catalog_.at(id); }
  std::optional<uint32_t> product_id(const ImageSignature& sig) const;

  const FilterReport& report() const { return report_; }
  uint64_t near_dup_seed() const { return near_dup_seed_; }

 private:
  std::unique_ptr<HnswIndex> objects_;
  std::unique_ptr<HnswIndex> products_;
  std::vector<ObjectIndexEntry> object_meta_;  // embedding left empty
  std::unordered_map<ImageSignature, SceneInfo> scenes_;
  std::vector<ProductEntry> catalog_;
  std::unordered_map<ImageSignature, uint32_t> product_ids_;
  FilterReport report_;
  uint64_t near_dup_seed_ = kDefaultNearDupSeed;
};

// Visual-search seed expansion for data mining: for each seed image (looked up
// in the store), the top-k parent scenes of its nearest indexed objects.
// Returns the union without duplicates or seeds, ordered by best distance
// (ties by signature). Throws UnknownEntityError for a seed missing from the
// store.
std::vector<ImageSignature> mine_similar_examples(std::span<const ImageSignature> seeds, const VisualIndex& index,
                                                  const FeatureStore& store, size_t k);

}  // namespace vpg
