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
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "vpg/clock.h"
#include "vpg/scene.h"

namespace vpg {

struct StoreMetrics {
  uint64_t lookups = 0;
  uint64_t hits = 0;
  uint64_t fallback_extractions = 0;

  uint64_t misses() const { return lookups - hits; }
  // 0 when nothing has been looked up yet.
  double hit_rate() const { return lookups == 0 ? 0.0 : static_cast<double>(hits) / lookups; }
};

struct StoreStats {
  size_t entries = 0;
  size_t segments = 0;
  uint64_t total_bytes = 0;
  uint64_t live_bytes = 0;
};

struct LookupResult {
  SceneEntry entry;
  bool hit = false;
};

using Extractor = std::function<SceneEntry(const ImageSignature&)>;
using ScenePredicate = std::function<bool(const SceneEntry&)>;

// Matches scenes whose metadata declares the given domain.
ScenePredicate domain_is(Domain d);

// Persistent signature -> SceneEntry map.
//
// Values are appended to log segments under <dir>/segments/ and located
// through an in-memory index rebuilt on open by replaying the segments listed
// in <dir>/MANIFEST. Each record is framed as [len u32][crc32 u32][payload].
// A torn record at the tail of the newest segment is truncated on open. When
// dead bytes exceed `compaction_ratio` of the total, live records are
// rewritten into a fresh segment.
//
// Readers never block each other; writes to one key are atomic and the last
// write wins.
class FeatureStore {
 public:
  struct Options {
    uint64_t segment_bytes = 64ull << 20;
    double compaction_ratio = 0.5;
    uint64_t compaction_min_bytes = 8ull << 20;
    bool sync_writes = false;
    Clock clock = system_clock();
  };

  static std::unique_ptr<FeatureStore> open(const std::filesystem::path& dir);
  static std::unique_ptr<FeatureStore> open(const std::filesystem::path& dir, Options options);
  ~FeatureStore();

  FeatureStore(const FeatureStore&) = delete;
  FeatureStore& operator=(const FeatureStore&) = delete;

  // Offline bulk load. Returns the number of entries written; on I/O failure
  // throws StoreError naming how many entries were written before it.
  size_t backfill(std::span<const SceneEntry> entries);
  size_t backfill(const std::function<std::optional<SceneEntry>()>& next);

  // Streaming write. Visible to get() once this returns.
  void apply_update(const SceneEntry& entry);

  // Uninstrumented read.
  std::optional<SceneEntry> get(const ImageSignature& sig) const;
  bool contains(const ImageSignature& sig) const;

  // Serving read: counts a lookup, and on a miss runs `extractor` once per key
  // (concurrent callers for the same key share that extraction), writes the
  // result with source=online_fallback, and returns it.
  LookupResult get_or_extract(const ImageSignature& sig, const Extractor& extractor);

  // Entries matching `predicate` (all when empty), ascending by signature.
  void scan(const ScenePredicate& predicate, const std::function<void(const SceneEntry&)>& visit) const;
  std::vector<SceneEntry> scan(const ScenePredicate& predicate = {}) const;

  StoreMetrics metrics() const;
  void reset_metrics();
  StoreStats stats() const;
  size_t size() const;

  void compact();
  void flush();

  const std::filesystem::path& directory() const { return dir_; }

 private:
  struct Location {
    uint32_t segment = 0;
    uint64_t offset = 0;
    uint32_t length = 0;  // framed length
  };
  struct Segment {
    int fd = -1;
    uint64_t size = 0;
  };

  FeatureStore(std::filesystem::path dir, Options options);

  void load();
  void replay_segment(uint32_t id, bool is_last);
  void write_manifest();
  uint32_t create_segment();
  std::filesystem::path segment_path(uint32_t id) const;
  void append_locked(const SceneEntry& entry);
  std::string read_record(const Location& loc) const;
  void maybe_compact_locked();
  void compact_locked();

  std::filesystem::path dir_;
  Options options_;

  mutable std::shared_mutex index_mu_;  // guards index_ and segments_
  std::unordered_map<ImageSignature, Location> index_;
  std::map<uint32_t, Segment> segments_;
  uint64_t live_bytes_ = 0;
  uint64_t total_bytes_ = 0;

  std::mutex write_mu_;  // serializes appends and compaction
  uint32_t active_segment_ = 0;
  uint32_t next_segment_id_ = 1;

  std::mutex inflight_mu_;
  std::unordered_map<ImageSignature, std::shared_future<SceneEntry>> inflight_;

  std::atomic<uint64_t> lookups_{0};
  std::atomic<uint64_t> hits_{0};
  std::atomic<uint64_t> extractions_{0};
};

// Reads SceneEntry JSONL; throws ParseError with the 1-based line number.
std::vector<SceneEntry> read_scenes_jsonl(const std::filesystem::path& path);
void write_scenes_jsonl(const std::filesystem::path& path, std::span<const SceneEntry> scenes);

}  // namespace vpg
