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

#include "vpg/ann_index.h"

#include <zlib.h>

#include <algorithm>
#include <climits>
#include <cstring>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "byte_io.h"
#include "vpg/embedding_ops.h"
#include "vpg/errors.h"
#include "vpg/random.h"

namespace vpg {

namespace {

constexpr std::string_view kMagic = "VPGA1";

void check_dim(size_t expected, size_t got) {
  if (expected != got) {
    throw DimensionError("expected dimension " + std::to_string(expected) + ", got " + std::to_string(got));
  }
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
}

// Per-thread visit marks; a fresh epoch per search avoids clearing.
struct VisitMarks {
  std::vector<uint32_t> marks;
  uint32_t epoch = 0;

  void reset(size_t n) {
    if (marks.size() < n) marks.resize(n, 0);
    if (++epoch == 0) {
      std::fill(marks.begin(), marks.end(), 0);
      epoch = 1;
    }
  }
  bool visit(uint32_t id) {
    if (marks[id] == epoch) return false;
    marks[id] = epoch;
    return true;
  }
};

thread_local VisitMarks tl_marks;

}  // namespace

std::vector<std::vector<Neighbor>> VectorSearcher::search_batch(std::span<const Embedding> queries, size_t k) const {
  std::vector<std::vector<Neighbor>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(search(q.values(), k));
  return out;
}

BruteForceIndex BruteForceIndex::from(std::span<const Embedding> vectors) {
  BruteForceIndex index(vectors.empty() ? 0 : vectors[0].dim());
  for (const auto& v : vectors) index.add(v.values());
  return index;
}

uint32_t BruteForceIndex::add(std::span<const float> v) {
  check_dim(dim_, v.size());
  const auto id = static_cast<uint32_t>(size());
  data_.insert(data_.end(), v.begin(), v.end());
  return id;
}

std::vector<Neighbor> BruteForceIndex::search(std::span<const float> q, size_t k) const {
  if (size() == 0) return {};
  check_dim(dim_, q.size());
  std::vector<Neighbor> all(size());
  for (uint32_t i = 0; i < all.size(); ++i) {
    all[i] = Neighbor{i, std::sqrt(squared_l2(q.data(), data_.data() + size_t{i} * dim_, dim_))};
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<ptrdiff_t>(k), all.end(), neighbor_less);
  all.resize(k);
  return all;
}

HnswIndex::HnswIndex(size_t dim, HnswParams params)
    : dim_(dim), params_(params), level_mult_(0), rng_state_(params.seed) {
  if (params_.M < 2) throw InvalidArgument("HNSW M must be at least 2");
  if (params_.ef_construction < 1 || params_.ef_search < 1) throw InvalidArgument("HNSW ef must be positive");
  level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
}

HnswIndex HnswIndex::build(std::span<const Embedding> vectors, HnswParams params) {
  if (vectors.empty()) throw InvalidArgument("cannot infer dimension from an empty input");
  return build(vectors[0].dim(), vectors, params);
}

HnswIndex HnswIndex::build(size_t dim, std::span<const Embedding> vectors, HnswParams params) {
  HnswIndex index(dim, params);
  index.data_.reserve(vectors.size() * dim);
  for (const auto& v : vectors) index.add(v.values());
  return index;
}

float HnswIndex::dist2(std::span<const float> q, uint32_t node) const {
  return squared_l2(q.data(), node_vector(node), dim_);
}

float HnswIndex::dist2(uint32_t a, uint32_t b) const { return squared_l2(node_vector(a), node_vector(b), dim_); }

int HnswIndex::random_level() {
  rng_state_ = mix64(rng_state_);
  // Uniform in (0, 1].
  const double u = (static_cast<double>(rng_state_ >> 11) + 1.0) * 0x1.0p-53;
  return static_cast<int>(std::floor(-std::log(u) * level_mult_));
}

uint32_t HnswIndex::greedy_descend(std::span<const float> q, int down_to_layer) const {
  uint32_t cur = entry_;
  float best = dist2(q, cur);
  for (int layer = max_level_; layer > down_to_layer; --layer) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (uint32_t n : links_[cur][layer]) {
        const float d = dist2(q, n);
        if (d < best || (d == best && n < cur)) {
          best = d;
          cur = n;
          changed = true;
        }
      }
    }
  }
  return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q, uint32_t entry, size_t ef,
                                                          int layer) const {
  VisitMarks& marks = tl_marks;
  marks.reset(node_count());
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> results;  // max-heap: worst on top
  const Candidate start{dist2(q, entry), entry};
  marks.visit(entry);
  frontier.push(start);
  results.push(start);
  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (results.size() >= ef && results.top() < c) break;
    frontier.pop();
    for (uint32_t n : links_[c.node][layer]) {
      if (!marks.visit(n)) continue;
      const Candidate nc{dist2(q, n), n};
      if (results.size() < ef || nc < results.top()) {
        frontier.push(nc);
        results.push(nc);
        if (results.size() > ef) results.pop();
      }
    }
  }
  std::vector<Candidate> out(results.size());
  for (size_t i = out.size(); i-- > 0;) {
    out[i] = results.top();
    results.pop();
  }
  return out;
}

std::vector<uint32_t> HnswIndex::select_neighbors(const std::vector<Candidate>& sorted, size_t m) const {
  // Keep a candidate only if it is closer to the base than to every neighbor
  // already kept; this spreads links across directions.
  std::vector<uint32_t> kept;
  for (const auto& c : sorted) {
    if (kept.size() >= m) break;
    bool good = true;
    for (uint32_t k : kept) {
      if (dist2(c.node, k) < c.dist) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c.node);
  }
  return kept;
}

std::optional<uint32_t> HnswIndex::find_identical(std::span<const float> v, uint64_t hash) const {
  auto [lo, hi] = by_hash_.equal_range(hash);
  for (auto it = lo; it != hi; ++it) {
    if (std::memcmp(node_vector(it->second), v.data(), dim_ * sizeof(float)) == 0) return it->second;
  }
  return std::nullopt;
}

uint32_t HnswIndex::add(std::span<const float> v) {
  check_dim(dim_, v.size());
  for (float x : v) {
    if (!std::isfinite(x)) throw InvalidArgument("vector contains a non-finite value");
  }
  const auto id = static_cast<uint32_t>(size());
  const uint64_t hash = hash_string(std::string_view(reinterpret_cast<const char*>(v.data()), v.size_bytes()));
  if (auto same = find_identical(v, hash)) {
    ids_[*same].push_back(id);
    node_of_.push_back(*same);
    return id;
  }

  const auto node = static_cast<uint32_t>(node_count());
  data_.insert(data_.end(), v.begin(), v.end());
  const int level = random_level();
  levels_.push_back(level);
  links_.emplace_back(static_cast<size_t>(level) + 1);
  ids_.push_back({id});
  node_of_.push_back(node);
  by_hash_.emplace(hash, node);
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return id;
  }

  uint32_t cur = greedy_descend(v, level);
  for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto found = search_layer(v, cur, params_.ef_construction, layer);
    links_[node][layer] = select_neighbors(found, params_.M);
    for (uint32_t n : links_[node][layer]) {
      auto& nl = links_[n][layer];
      nl.push_back(node);
      if (nl.size() > max_links(layer)) {
        std::vector<Candidate> cands;
        cands.reserve(nl.size());
        for (uint32_t x : nl) cands.push_back({dist2(n, x), x});
        std::sort(cands.begin(), cands.end());
        nl = select_neighbors(cands, max_links(layer));
      }
    }
    cur = found.front().node;
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
  return id;
}

std::vector<Neighbor> HnswIndex::search(std::span<const float> q, size_t k) const {
  return search(q, k, params_.ef_search);
}

std::vector<Neighbor> HnswIndex::search(std::span<const float> q, size_t k, size_t ef) const {
  if (size() == 0) return {};
  check_dim(dim_, q.size());
  if (k == 0) return {};
  const uint32_t start = greedy_descend(q, 0);
  auto found = search_layer(q, start, std::max(ef, k), 0);
  std::vector<Neighbor> out;
  for (const auto& c : found) {
    const float d = std::sqrt(c.dist);
    for (uint32_t id : ids_[c.node]) out.push_back(Neighbor{id, d});
    if (out.size() >= k) break;
  }
  // sqrt can merge distinct squared distances; keep the id tie-break.
  std::sort(out.begin(), out.end(), neighbor_less);
  if (out.size() > k) out.resize(k);
  return out;
}

size_t HnswIndex::max_degree(int layer) const {
  size_t m = 0;
  for (size_t i = 0; i < node_count(); ++i) {
    if (levels_[i] >= layer) m = std::max(m, links_[i][static_cast<size_t>(layer)].size());
  }
  return m;
}

void HnswIndex::save(const std::filesystem::path& path) const {
  internal::ByteWriter w;
  w.put<uint32_t>(static_cast<uint32_t>(dim_));
  w.put<uint32_t>(params_.M);
  w.put<uint32_t>(params_.ef_construction);
  w.put<uint32_t>(params_.ef_search);
  w.put<uint64_t>(params_.seed);
  w.put<uint64_t>(size());
  w.put<uint64_t>(node_count());
  w.put<uint32_t>(entry_);
  w.put<int32_t>(max_level_);
  for (size_t i = 0; i < node_count(); ++i) {
    w.put<uint8_t>(static_cast<uint8_t>(levels_[i]));
    w.put<uint32_t>(static_cast<uint32_t>(ids_[i].size()));
    for (uint32_t id : ids_[i]) w.put<uint32_t>(id);
    for (const auto& layer : links_[i]) {
      w.put<uint32_t>(static_cast<uint32_t>(layer.size()));
      for (uint32_t n : layer) w.put<uint32_t>(n);
    }
  }
  for (float f : data_) w.put<uint16_t>(float_to_half(f));
  const std::string& body = w.str();
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!out) throw StoreError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

HnswIndex HnswIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string file = buf.str();
  if (file.size() < kMagic.size() + 4 || std::string_view(file).substr(0, kMagic.size()) != kMagic) {
    throw FormatError(path.string() + ": not a VPGA1 index file");
  }
  const std::string_view body = std::string_view(file).substr(kMagic.size(), file.size() - kMagic.size() - 4);
  uint32_t stored_crc;
  std::memcpy(&stored_crc, file.data() + file.size() - 4, 4);
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  if (crc != stored_crc) throw FormatError(path.string() + ": checksum mismatch");

  internal::ByteReader r(body);
  const size_t dim = r.get<uint32_t>();
  HnswParams params;
  params.M = r.get<uint32_t>();
  params.ef_construction = r.get<uint32_t>();
  params.ef_search = r.get<uint32_t>();
  params.seed = r.get<uint64_t>();
  const uint64_t ids = r.get<uint64_t>();
  const uint64_t nodes = r.get<uint64_t>();
  HnswIndex index(dim, params);
  index.entry_ = r.get<uint32_t>();
  index.max_level_ = r.get<int32_t>();
  index.node_of_.assign(ids, UINT32_MAX);
  for (uint64_t i = 0; i < nodes; ++i) {
    const int level = r.get<uint8_t>();
    index.levels_.push_back(level);
    auto& node_ids = index.ids_.emplace_back(r.get<uint32_t>());
    for (auto& id : node_ids) {
      id = r.get<uint32_t>();
      if (id >= ids || index.node_of_[id] != UINT32_MAX) throw FormatError(path.string() + ": bad id table");
      index.node_of_[id] = static_cast<uint32_t>(i);
    }
    auto& layers = index.links_.emplace_back(static_cast<size_t>(level) + 1);
    for (auto& layer : layers) {
      layer.resize(r.get<uint32_t>());
      for (auto& n : layer) {
        n = r.get<uint32_t>();
        if (n >= nodes) throw FormatError(path.string() + ": neighbor out of range");
      }
    }
  }
  for (uint32_t node : index.node_of_) {
    if (node == UINT32_MAX) throw FormatError(path.string() + ": id without a node");
  }
  index.data_.resize(nodes * dim);
  for (auto& f : index.data_) f = half_to_float(r.get<uint16_t>());
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");
  if (nodes > 0 && (index.entry_ >= nodes || index.max_level_ != index.levels_[index.entry_])) {
    throw FormatError(path.string() + ": inconsistent entry point");
  }
  for (uint32_t node = 0; node < nodes; ++node) {
    const auto bytes = std::string_view(reinterpret_cast<const char*>(index.node_vector(node)), dim * sizeof(float));
    index.by_hash_.emplace(hash_string(bytes), node);
    // Replay the level generator so later add() calls continue the sequence.
    index.rng_state_ = mix64(index.rng_state_);
  }
  return index;
}

double ann_recall(const VectorSearcher& index, const VectorSearcher& exact, std::span<const Embedding> queries,
                  size_t k) {
  if (queries.empty()) throw EmptyEvaluationError("ann_recall needs at least one query");
  if (k == 0) throw InvalidArgument("k must be positive");
  double total = 0;
  for (const auto& q : queries) {
    auto approx = index.search(q.values(), k);
    auto truth = exact.search(q.values(), k);
    std::unordered_set<uint32_t> want;
    for (const auto& n : truth) want.insert(n.id);
    size_t hit = 0;
    for (const auto& n : approx) hit += want.count(n.id);
    // A corpus smaller than k caps the attainable overlap.
    total += truth.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
  }
  return total / static_cast<double>(queries.size());
}

}  // namespace vpg
