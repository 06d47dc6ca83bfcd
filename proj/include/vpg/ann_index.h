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
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vpg/types.h"

namespace vpg {

struct Neighbor {
  uint32_t id = 0;
  float distance = 0;  // euclidean
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// k-nearest-neighbor search over a fixed set of vectors addressed by dense
// ids 0..size()-1. Results are ascending by (distance, id).
class VectorSearcher {
 public:
  virtual ~VectorSearcher() = default;
  virtual size_t size() const = 0;
  virtual size_t dim() const = 0;
  // Throws DimensionError when q.size() != dim().
  virtual std::vector<Neighbor> search(std::span<const float> q, size_t k) const = 0;

  std::vector<Neighbor> search(const Embedding& q, size_t k) const { return search(q.values(), k); }
  // One pass over a batch of queries; result i answers queries[i].
  std::vector<std::vector<Neighbor>> search_batch(std::span<const Embedding> queries, size_t k) const;
};

// Exhaustive scan. The reference oracle for the graph index.
class BruteForceIndex : public VectorSearcher {
 public:
  explicit BruteForceIndex(size_t dim) : dim_(dim) {}
  static BruteForceIndex from(std::span<const Embedding> vectors);

  uint32_t add(std::span<const float> v);
  size_t size() const override { return dim_ == 0 ? 0 : data_.size() / dim_; }
  size_t dim() const override { return dim_; }
  std::vector<Neighbor> search(std::span<const float> q, size_t k) const override;
  using VectorSearcher::search;

 private:
  size_t dim_;
  std::vector<float> data_;
};

struct HnswParams {
  uint32_t M = 16;
  uint32_t ef_construction = 200;
  uint32_t ef_search = 128;
  uint64_t seed = 0x686e'7377'5f76'7067ULL;  // level assignment
};

// Hierarchical navigable small-world graph over euclidean distance.
//
// Built single-threaded by inserting vectors in id order, so the graph is a
// pure function of (vectors, params). Bit-identical vectors share one graph
// node; without this, large clusters of exact duplicates link only among
// themselves and become unreachable. Queries after build are read-only and
// safe from any number of threads.
//
// File format (little-endian): "VPGA1", u32 dim, u32 M, u32 ef_construction,
// u32 ef_search, u64 seed, u64 id count, u64 node count, u32 entry node,
// i32 top level; per node u8 level, u32 id count and the ids, then per layer
// u32 degree and the neighbor nodes; node count * dim half-precision values;
// u32 crc32 of everything after the magic.
class HnswIndex : public VectorSearcher {
 public:
  HnswIndex(size_t dim, HnswParams params);
  static HnswIndex build(std::span<const Embedding> vectors, HnswParams params = {});
  // dim is taken from the vectors; an empty input needs it spelled out.
  static HnswIndex build(size_t dim, std::span<const Embedding> vectors, HnswParams params = {});

  uint32_t add(std::span<const float> v);

  size_t size() const override { return node_of_.size(); }
  size_t node_count() const { return levels_.size(); }
  size_t dim() const override { return dim_; }
  const HnswParams& params() const { return params_; }
  void set_ef_search(uint32_t ef) { params_.ef_search = ef; }

  std::vector<Neighbor> search(std::span<const float> q, size_t k) const override;
  std::vector<Neighbor> search(std::span<const float> q, size_t k, size_t ef) const;
  using VectorSearcher::search;

  std::span<const float> vector(uint32_t id) const {
    return {data_.data() + size_t{node_of_.at(id)} * dim_, dim_};
  }

  // Max out-degree over all nodes of a layer; for tests.
  size_t max_degree(int layer) const;
  int top_level() const { return max_level_; }

  void save(const std::filesystem::path& path) const;
  static HnswIndex load(const std::filesystem::path& path);

 private:
  struct Candidate {
    float dist;  // squared
    uint32_t node;
    bool operator<(const Candidate& o) const { return dist != o.dist ? dist < o.dist : node < o.node; }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  const float* node_vector(uint32_t node) const { return data_.data() + size_t{node} * dim_; }
  float dist2(std::span<const float> q, uint32_t node) const;
  float dist2(uint32_t a, uint32_t b) const;
  int random_level();
  size_t max_links(int layer) const { return layer == 0 ? 2 * params_.M : params_.M; }
  // Best-first search restricted to one layer; returns up to ef candidates ascending.
  std::vector<Candidate> search_layer(std::span<const float> q, uint32_t entry, size_t ef, int layer) const;
  uint32_t greedy_descend(std::span<const float> q, int down_to_layer) const;
  std::vector<uint32_t> select_neighbors(const std::vector<Candidate>& sorted, size_t m) const;
  std::optional<uint32_t> find_identical(std::span<const float> v, uint64_t hash) const;

  size_t dim_;
  HnswParams params_;
  double level_mult_;
  uint64_t rng_state_;
  std::vector<float> data_;                                // per node
  std::vector<int> levels_;                                // per node
  std::vector<std::vector<std::vector<uint32_t>>> links_;  // [node][layer] -> nodes
  std::vector<std::vector<uint32_t>> ids_;                 // [node] -> ids, ascending
  std::vector<uint32_t> node_of_;                          // [id] -> node
  std::unordered_multimap<uint64_t, uint32_t> by_hash_;    // vector bytes hash -> node
  uint32_t entry_ = 0;
  int max_level_ = -1;
};

// Mean over queries of |top-k(index) ∩ top-k(exact)| / k, with k capped at
// the corpus size.
double ann_recall(const VectorSearcher& index, const VectorSearcher& exact, std::span<const Embedding> queries,
                  size_t k);

}  // namespace vpg
