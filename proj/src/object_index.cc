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

#include "vpg/object_index.h"

#include <unordered_set>

#include "vpg/errors.h"

namespace vpg {

FilterConfig FilterConfig::read(ConfigReader& r, const std::string& p) {
  FilterConfig c;
  c.min_width = static_cast<uint32_t>(r.get_int(p + "min_width", c.min_width, 1, 1 << 20));
  c.min_height = static_cast<uint32_t>(r.get_int(p + "min_height", c.min_height, 1, 1 << 20));
  c.max_blur = static_cast<float>(r.get_double(p + "max_blur", c.max_blur, 0.0, 1.0));
  c.min_confidence = static_cast<float>(r.get_double(p + "min_confidence", c.min_confidence, 0.0, 1.0));
  c.min_area_fraction = r.get_double(p + "min_area_fraction", c.min_area_fraction, 0.0, 1.0);
  c.min_categories = static_cast<size_t>(r.get_int(p + "min_categories", static_cast<int64_t>(c.min_categories), 0,
                                                   static_cast<int64_t>(taxonomy().size())));
  const std::string allowed = r.get_string(p + "allowed_categories", "");
  size_t pos = 0;
  while (pos < allowed.size()) {
    size_t comma = allowed.find(',', pos);
    if (comma == std::string::npos) comma = allowed.size();
    std::string name = allowed.substr(pos, comma - pos);
    name.erase(0, name.find_first_not_of(' '));
    name.erase(name.find_last_not_of(' ') + 1);
    if (!name.empty()) {
      try {
        c.allowed_categories.insert(Category::from_name(name));
      } catch (const Error&) {
        r.add_violation(p + "allowed_categories: unknown category '" + name + "'");
      }
    }
    pos = comma + 1;
  }
  return c;
}

size_t FilterReport::rejected() const {
  size_t n = 0;
  for (const auto& [reason, count] : rejects) n += count;
  return n;
}

nlohmann::json FilterReport::to_json() const {
  nlohmann::json r = nlohmann::json::object();
  for (const auto& [reason, count] : rejects) r[reason] = count;
  return {{"input_count", input_count},
          {"kept_count", kept_count},
          {"objects_dropped", objects_dropped},
          {"rejects", r}};
}

FilterVerdict filter_record(const SceneEntry& record, const FilterConfig& config) {
  FilterVerdict v;
  if (!record.metadata) {
    v.reject_reason = kRejectNoMetadata;
    return v;
  }
  const ImageMetadata& m = *record.metadata;
  if (!m.is_inspirational) {
    v.reject_reason = kRejectInspirational;
    return v;
  }
  if (m.is_grayscale || m.is_collage_or_screenshot || m.width < config.min_width || m.height < config.min_height ||
      m.blur_score > config.max_blur) {
    v.reject_reason = kRejectImageQuality;
    return v;
  }
  const double image_area = static_cast<double>(m.width) * m.height;
  SceneEntry kept = record;
  kept.objects.clear();
  std::set<Category> categories;
  for (const auto& o : record.objects) {
    const bool ok = o.confidence >= config.min_confidence && o.box.area() >= config.min_area_fraction * image_area &&
                    (config.allowed_categories.empty() || config.allowed_categories.count(o.category));
    if (ok) {
      kept.objects.push_back(o);
      categories.insert(o.category);
    } else {
      ++v.objects_dropped;
    }
  }
  if (categories.size() < config.min_categories) {
    v.reject_reason = kRejectShoppability;
    v.objects_dropped = 0;
    return v;
  }
  v.kept = std::move(kept);
  return v;
}

std::optional<SceneEntry> CorpusFilter::accept(const SceneEntry& record) {
  ++report_.input_count;
  FilterVerdict v = filter_record(record, config_);
  if (!v.kept) {
    ++report_.rejects[std::string(v.reject_reason)];
    return std::nullopt;
  }
  ++report_.kept_count;
  report_.objects_dropped += v.objects_dropped;
  return std::move(v.kept);
}

FilterResult filter_corpus(std::span<const SceneEntry> records, const FilterConfig& config) {
  CorpusFilter filter(config);
  FilterResult out;
  for (const auto& r : records) {
    if (auto kept = filter.accept(r)) out.kept.push_back(std::move(*kept));
  }
  out.report = filter.report();
  return out;
}

std::vector<ObjectIndexEntry> pivot_to_objects(std::span<const SceneEntry> scenes) {
  std::vector<ObjectIndexEntry> out;
  std::unordered_set<ImageSignature> seen;
  for (const auto& s : scenes) {
    if (!seen.insert(s.signature).second) throw DuplicateKeyError("scene " + s.signature.to_hex() + " appears twice");
    for (size_t i = 0; i < s.objects.size(); ++i) {
      const auto& o = s.objects[i];
      out.push_back(ObjectIndexEntry{s.signature, static_cast<uint32_t>(i), o.box, o.category, o.confidence,
                                     o.embedding});
    }
  }
  return out;
}

}  // namespace vpg
