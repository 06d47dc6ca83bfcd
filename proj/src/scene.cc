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

#include "vpg/scene.h"

#include "byte_io.h"
#include "vpg/embedding_ops.h"
#include "vpg/errors.h"

namespace vpg {

using nlohmann::json;

namespace {

constexpr uint8_t kFlagInspirational = 1;
constexpr uint8_t kFlagGrayscale = 2;
constexpr uint8_t kFlagCollage = 4;

void put_embedding(internal::ByteWriter& w, const Embedding& e) {
  w.put<uint16_t>(static_cast<uint16_t>(e.dim()));
  w.put_bytes(encode_half(e));
}

Embedding get_embedding(internal::ByteReader& r) {
  auto dim = r.get<uint16_t>();
  return decode_half(r.get_bytes(size_t{dim} * 2));
}

}  // namespace

std::string_view source_name(EntrySource s) {
  switch (s) {
    case EntrySource::kBackfill: return "backfill";
    case EntrySource::kStream: return "stream";
    case EntrySource::kOnlineFallback: return "online_fallback";
  }
  return "backfill";
}

EntrySource source_from_name(std::string_view name) {
  if (name == "backfill") return EntrySource::kBackfill;
  if (name == "stream") return EntrySource::kStream;
  if (name == "online_fallback") return EntrySource::kOnlineFallback;
  throw InvalidArgument("unknown entry source: " + std::string(name));
}

json box_to_json(const BoundingBox& box) { return json::array({box.x, box.y, box.w, box.h}); }

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("box must be [x, y, w, h]");
  BoundingBox box{j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
  if (!box.valid()) throw InvalidArgument("box must have positive width and height");
  return box;
}

json scene_to_json(const SceneEntry& entry) {
  json objects = json::array();
  for (const auto& obj : entry.objects) {
    objects.push_back({{"box", box_to_json(obj.box)},
                       {"category", obj.category.name()},
                       {"confidence", obj.confidence},
                       {"embedding", embedding_to_base64(obj.embedding)}});
  }
  json j = {{"signature", entry.signature.to_hex()},
            {"full_embedding", embedding_to_base64(entry.full_embedding)},
            {"objects", std::move(objects)},
            {"source", source_name(entry.source)}};
  if (entry.ingested_at != 0) j["ingested_at"] = entry.ingested_at;
  if (entry.metadata) {
    const auto& m = *entry.metadata;
    j["metadata"] = {{"is_inspirational", m.is_inspirational},
                     {"is_grayscale", m.is_grayscale},
                     {"is_collage_or_screenshot", m.is_collage_or_screenshot},
                     {"width", m.width},
                     {"height", m.height},
                     {"blur_score", m.blur_score},
                     {"domain", domain_name(m.domain)}};
  }
  return j;
}

SceneEntry scene_from_json(const json& j) {
  SceneEntry entry;
  entry.signature = ImageSignature::from_hex(j.at("signature").get<std::string>());
  entry.full_embedding = embedding_from_base64(j.at("full_embedding").get<std::string>());
  if (j.contains("objects")) {
    for (const auto& o : j.at("objects")) {
      DetectedObject obj;
      obj.box = box_from_json(o.at("box"));
      obj.category = Category::from_name(o.at("category").get<std::string>());
      obj.confidence = o.at("confidence").get<float>();
      if (obj.confidence < 0 || obj.confidence > 1) throw InvalidArgument("object confidence outside [0, 1]");
      obj.embedding = embedding_from_base64(o.at("embedding").get<std::string>());
      entry.objects.push_back(std::move(obj));
    }
  }
  entry.source = source_from_name(j.value("source", std::string("backfill")));
  entry.ingested_at = j.value("ingested_at", int64_t{0});
  if (j.contains("metadata")) {
    const auto& m = j.at("metadata");
    ImageMetadata meta;
    meta.is_inspirational = m.at("is_inspirational").get<bool>();
    meta.is_grayscale = m.at("is_grayscale").get<bool>();
    meta.is_collage_or_screenshot = m.at("is_collage_or_screenshot").get<bool>();
    meta.width = m.at("width").get<uint32_t>();
    meta.height = m.at("height").get<uint32_t>();
    meta.blur_score = m.at("blur_score").get<float>();
    meta.domain = domain_from_name(m.at("domain").get<std::string>());
    if (meta.width == 0 || meta.height == 0) throw InvalidArgument("metadata width/height must be positive");
    entry.metadata = meta;
  }
  return entry;
}

std::string encode_scene(const SceneEntry& entry) {
  internal::ByteWriter w;
  w.put<uint8_t>(kSceneSchemaVersion);
  w.put_bytes(std::string_view(reinterpret_cast<const char*>(entry.signature.bytes.data()), 16));
  w.put<int64_t>(entry.ingested_at);
  w.put<uint8_t>(static_cast<uint8_t>(entry.source));
  put_embedding(w, entry.full_embedding);
  w.put<uint8_t>(entry.metadata ? 1 : 0);
  if (entry.metadata) {
    const auto& m = *entry.metadata;
    uint8_t flags = (m.is_inspirational ? kFlagInspirational : 0) |
                    (m.is_grayscale ? kFlagGrayscale : 0) |
                    (m.is_collage_or_screenshot ? kFlagCollage : 0);
    w.put<uint8_t>(flags);
    w.put<uint32_t>(m.width);
    w.put<uint32_t>(m.height);
    w.put<float>(m.blur_score);
    w.put<uint8_t>(static_cast<uint8_t>(m.domain));
  }
  w.put<uint32_t>(static_cast<uint32_t>(entry.objects.size()));
  for (const auto& obj : entry.objects) {
    w.put<float>(obj.box.x);
    w.put<float>(obj.box.y);
    w.put<float>(obj.box.w);
    w.put<float>(obj.box.h);
    w.put<uint16_t>(obj.category.id);
    w.put<float>(obj.confidence);
    put_embedding(w, obj.embedding);
  }
  return std::move(w.str());
}

SceneEntry decode_scene(std::string_view bytes) {
  internal::ByteReader r(bytes);
  auto version = r.get<uint8_t>();
  if (version != kSceneSchemaVersion) {
    throw FormatError("unsupported scene schema version " + std::to_string(version));
  }
  SceneEntry entry;
  auto sig = r.get_bytes(16);
  std::memcpy(entry.signature.bytes.data(), sig.data(), 16);
  entry.ingested_at = r.get<int64_t>();
  auto source = r.get<uint8_t>();
  if (source > 2) throw FormatError("bad entry source tag");
  entry.source = static_cast<EntrySource>(source);
  entry.full_embedding = get_embedding(r);
  if (r.get<uint8_t>() != 0) {
    ImageMetadata m;
    auto flags = r.get<uint8_t>();
    m.is_inspirational = flags & kFlagInspirational;
    m.is_grayscale = flags & kFlagGrayscale;
    m.is_collage_or_screenshot = flags & kFlagCollage;
    m.width = r.get<uint32_t>();
    m.height = r.get<uint32_t>();
    m.blur_score = r.get<float>();
    m.domain = static_cast<Domain>(r.get<uint8_t>());
    entry.metadata = m;
  }
  auto count = r.get<uint32_t>();
  entry.objects.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    DetectedObject obj;
    obj.box.x = r.get<float>();
    obj.box.y = r.get<float>();
    obj.box.w = r.get<float>();
    obj.box.h = r.get<float>();
    obj.category = Category::from_id(r.get<uint16_t>());
    obj.confidence = r.get<float>();
    obj.embedding = get_embedding(r);
    entry.objects.push_back(std::move(obj));
  }
  if (!r.done()) throw FormatError("trailing bytes in scene record");
  return entry;
}

}  // namespace vpg
