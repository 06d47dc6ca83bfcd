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
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpg/ann_index.h"
#include "vpg/clock.h"
#include "vpg/config_reader.h"
#include "vpg/feature_store.h"
#include "vpg/forward_stl.h"
#include "vpg/object_index.h"
#include "vpg/reverse_stl.h"
#include "vpg/synthetic_world.h"
#include "vpg/visual_index.h"

namespace vpg {

// Every tunable of the engine. Keys are grouped: hnsw.*, retrieval.k_raw,
// relevance.*, dedup.*, rerank.*, forward.*, filters.*, world.*, service.*.
struct EngineConfig {
  std::filesystem::path store_dir = "vpg-data/store";
  std::filesystem::path index_dir = "vpg-data/index";
  std::filesystem::path catalog_path = "vpg-data/catalog.jsonl";
  HnswParams hnsw;
  FilterConfig filters;
  ReverseConfig reverse;
  ForwardConfig forward;
  WorldConfig world;
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string log_level = "info";

  static EngineConfig read(ConfigReader& reader);
  // Reads the optional file, applies "key=value" overrides (later wins) and
  // validates; ConfigError lists every violation.
  static EngineConfig load(const std::optional<std::filesystem::path>& file,
                           std::span<const std::string> overrides = {});

  std::filesystem::path calibration_path() const { return index_dir / "calibration.json"; }
};

HnswParams read_hnsw_params(ConfigReader& reader, const std::string& prefix = "hnsw.");

// Shared core behind the CLI and the HTTP service, so both answer identically.
// The synthetic world backs feature extraction on store misses and is only
// generated when first needed.
class Engine {
 public:
  explicit Engine(EngineConfig config, Clock clock = system_clock());
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return config_; }

  const SyntheticWorld& world();
  Extractor extractor();
  FeatureStore& store();

  // Builds the index from the store and the catalog file and saves it.
  FilterReport build_index();

  // Loads the index and, when present, the saved calibration.
  void load();
  bool ready() const { return ready_.load(); }
  const VisualIndex& index() const;

  // Pools scores over up to `queries` catalog products, spread evenly over the
  // index order, and saves the result next to the index.
  RelevanceCalibration calibrate(size_t queries);
  const std::optional<RelevanceCalibration>& calibration() const { return calibration_; }
  void set_calibration(RelevanceCalibration cal) { calibration_ = cal; }

  ReverseResult reverse(const ImageSignature& product) const;
  ForwardResult forward(const ImageSignature& scene, const UserContext& ctx);
  std::map<ImageSignature, BatchItem> forward_batch(std::span<const ImageSignature> scenes, const UserContext& ctx);

  nlohmann::json metrics() const;

 private:
  EngineConfig config_;
  Clock clock_;
  std::once_flag world_once_;
  std::unique_ptr<SyntheticWorld> world_;
  std::mutex store_mu_;
  std::unique_ptr<FeatureStore> store_;
  std::unique_ptr<VisualIndex> index_;
  std::unique_ptr<ReverseStl> reverse_;
  std::unique_ptr<ForwardStl> forward_;
  std::optional<RelevanceCalibration> calibration_;
  std::atomic<bool> ready_{false};
  mutable std::atomic<uint64_t> reverse_queries_{0};
};

}  // namespace vpg
