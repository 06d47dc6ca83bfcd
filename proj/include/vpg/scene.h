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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vpg/types.h"

namespace vpg {

enum class EntrySource : uint8_t { kBackfill = 0, kStream = 1, kOnlineFallback = 2 };

std::string_view source_name(EntrySource s);
EntrySource source_from_name(std::string_view name);

// Corpus-quality signals attached to scene images at ingestion. In the
// synthetic world these are declared by the generator.
struct ImageMetadata {
  bool is_inspirational = false;
  bool is_grayscale = false;
  bool is_collage_or_screenshot = false;
  uint32_t width = 0;
  uint32_t height = 0;
  float blur_score = 0;
  Domain domain = Domain::kFashion;

  friend bool operator==(const ImageMetadata&, const ImageMetadata&) = default;
};

// Feature-store value: one image with its full-image embedding and detections.
struct SceneEntry {
  ImageSignature signature;
  Embedding full_embedding;
  std::vector<DetectedObject> objects;
  int64_t ingested_at = 0;  // ms since epoch
  EntrySource source = EntrySource::kBackfill;
  std::optional<ImageMetadata> metadata;

  friend bool operator==(const SceneEntry&, const SceneEntry&) = default;
};

nlohmann::json box_to_json(const BoundingBox& box);
BoundingBox box_from_json(const nlohmann::json& j);

nlohmann::json scene_to_json(const SceneEntry& entry);
SceneEntry scene_from_json(const nlohmann::json& j);

// Binary value encoding used by the store; leading byte is the schema tag.
inline constexpr uint8_t kSceneSchemaVersion = 1;
std::string encode_scene(const SceneEntry& entry);
SceneEntry decode_scene(std::string_view bytes);

}  // namespace vpg
