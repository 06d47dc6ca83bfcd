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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpg/config_reader.h"
#include "vpg/scene.h"
#include "vpg/types.h"

namespace vpg {

// Corpus filter thresholds.
struct FilterConfig {
  uint32_t min_width = 512;
  uint32_t min_height = 512;
  float max_blur = 0.5f;
  float min_confidence = 0.6f;
  double min_area_fraction = 0.005;
  size_t min_categories = 3;
  std::set<Category> allowed_categories;  // empty: every category

  static FilterConfig read(ConfigReader& reader, const std::string& prefix = "");
};

// Reject reasons, in evaluation order.
inline constexpr std::string_view kRejectNoMetadata = "no_metadata";
inline constexpr std::string_view kRejectInspirational = "inspirational";
inline constexpr std::string_view kRejectImageQuality = "image_quality";
inline constexpr std::string_view kRejectShoppability = "shoppability";

struct FilterReport {
  size_t input_count = 0;
  size_t kept_count = 0;
  size_t objects_dropped = 0;  // pruned from kept records
  std::map<std::string, size_t> rejects;

  size_t rejected() const;
  nlohmann::json to_json() const;
};

// Verdict for one record. The survivor keeps only objects that pass the
// per-object checks; the first failing stage names the reject.
struct FilterVerdict {
  std::optional<SceneEntry> kept;
  std::string_view reject_reason;
  size_t objects_dropped = 0;
};

FilterVerdict filter_record(const SceneEntry& record, const FilterConfig& config);

// Streaming form; records may be fed in any order.
class CorpusFilter {
 public:
  explicit CorpusFilter(FilterConfig config) : config_(std::move(config)) {}
  std::optional<SceneEntry> accept(const SceneEntry& record);
  const FilterReport& report() const { return report_; }

 private:
  FilterConfig config_;
  FilterReport report_;
};

struct FilterResult {
  std::vector<SceneEntry> kept;
  FilterReport report;
};

FilterResult filter_corpus(std::span<const SceneEntry> records, const FilterConfig& config);

// One detected object addressed by (parent scene, ordinal).
struct ObjectIndexEntry {
  ImageSignature parent;
  uint32_t ordinal = 0;
  BoundingBox box;
  Category category;
  float confidence = 0;
  Embedding embedding;

  friend bool operator==(const ObjectIndexEntry&, const ObjectIndexEntry&) = default;
};

// One entry per object, ordinals in the scene's object order. Throws
// DuplicateKeyError when a scene signature repeats.
std::vector<ObjectIndexEntry> pivot_to_objects(std::span<const SceneEntry> scenes);

}  // namespace vpg
