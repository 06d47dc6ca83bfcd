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
#include <list>
#include <mutex>
#include <optional>
#include <unordered_map>

namespace vpg {

struct CacheStats {
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t expirations = 0;
  uint64_t evictions = 0;

  double hit_rate() const {
    const uint64_t n = hits + misses;
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
};

// Entry-count-bounded LRU with a per-entry time-to-live. An entry stored at t
// is served while now - t <= ttl and never afterwards. Time comes from the
// caller, in milliseconds. Thread-safe.
template <typename K, typename V, typename Hash = std::hash<K>>
class TtlLruCache {
 public:
  TtlLruCache(size_t capacity, int64_t ttl_ms) : capacity_(capacity), ttl_ms_(ttl_ms) {}

  std::optional<V> get(const K& key, int64_t now_ms) {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      ++stats_.misses;
      return std::nullopt;
    }
    if (now_ms - it->second->stored_at > ttl_ms_) {
      lru_.erase(it->second);
      map_.erase(it);
      ++stats_.expirations;
      ++stats_.misses;
      return std::nullopt;
    }
    lru_.splice(lru_.begin(), lru_, it->second);
    ++stats_.hits;
    return it->second->value;
  }

  // Read without touching recency or counters.
  bool contains_fresh(const K& key, int64_t now_ms) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    return it != map_.end() && now_ms - it->second->stored_at <= ttl_ms_;
  }

  void put(const K& key, V value, int64_t now_ms) {
    std::lock_guard lock(mu_);
    if (capacity_ == 0) return;
    if (auto it = map_.find(key); it != map_.end()) {
      it->second->value = std::move(value);
      it->second->stored_at = now_ms;
      lru_.splice(lru_.begin(), lru_, it->second);
      return;
    }
    lru_.push_front(Node{key, std::move(value), now_ms});
    map_.emplace(key, lru_.begin());
    while (map_.size() > capacity_) {
      map_.erase(lru_.back().key);
      lru_.pop_back();
      ++stats_.evictions;
    }
  }

  size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }

  CacheStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  int64_t ttl_ms() const { return ttl_ms_; }
  size_t capacity() const { return capacity_; }

 private:
  struct Node {
    K key;
    V value;
    int64_t stored_at;
  };

  const size_t capacity_;
  const int64_t ttl_ms_;
  mutable std::mutex mu_;
  std::list<Node> lru_;  // most recent first
  std::unordered_map<K, typename std::list<Node>::iterator, Hash> map_;
  CacheStats stats_;
};

}  // namespace vpg
