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

#include "vpg/visual_index.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

#include "vpg/errors.h"

namespace vpg {

namespace {

std::string u64_hex(uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<size_t>(i)] = kDigits[v & 0xf];
  return s;
}

uint64_t hex_u64(const std::string& s) {
  if (s.size() != 16) throw FormatError("expected 16 hex digits, got '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

template <typename Fn>
void read_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
}

}  // namespace

VisualIndex VisualIndex::build(const FeatureStore& store, std::span<const ProductEntry> catalog,
                               const IndexBuildOptions& options) {
  auto scenes = store.scan([](const SceneEntry& e) { return e.metadata.has_value(); });
  return build(scenes, catalog, options);
}

VisualIndex VisualIndex::build(std::span<const SceneEntry> scenes, std::span<const ProductEntry> catalog,
                               const IndexBuildOptions& options) {
  VisualIndex index;
  index.near_dup_seed_ = options.near_dup_seed;
  auto filtered = filter_corpus(scenes, options.filters);
  index.report_ = filtered.report;

  auto objects = pivot_to_objects(filtered.kept);
  size_t dim = 0;
  if (!objects.empty()) {
    dim = objects.front().embedding.dim();
  } else if (!catalog.empty()) {
    dim = catalog.front().embedding.dim();
  }
  index.objects_ = std::make_unique<HnswIndex>(dim, options.hnsw);
  for (auto& o : objects) {
    index.objects_->add(round_trip_half(o.embedding).values());
    o.embedding = Embedding();
    index.object_meta_.push_back(std::move(o));
  }
  for (const auto& s : filtered.kept) {
    Embedding full = round_trip_half(s.full_embedding);
    const NearDupSignature near_dup = near_dup_signature(full, options.near_dup_seed);
    index.scenes_.emplace(s.signature, SceneInfo{s.signature, std::move(full), near_dup,
                                                 s.metadata->domain});
  }

  // Last row per signature wins; order of first appearance is kept.
  std::unordered_map<ImageSignature, size_t> latest;
  std::vector<ImageSignature> order;
  for (size_t i = 0; i < catalog.size(); ++i) {
    if (!latest.count(catalog[i].signature)) order.push_back(catalog[i].signature);
    latest[catalog[i].signature] = i;
  }
  index.products_ = std::make_unique<HnswIndex>(dim, options.hnsw);
  for (const auto& sig : order) {
    const ProductEntry& p = catalog[latest[sig]];
    if (!p.eligible()) continue;
    index.product_ids_[p.signature] = index.products_->add(round_trip_half(p.embedding).values());
    ProductEntry meta = p;
    meta.embedding = Embedding();
    index.catalog_.push_back(std::move(meta));
  }
  return index;
}

ObjectIndexEntry VisualIndex::object(uint32_t id) const {
  ObjectIndexEntry e = object_meta_.at(id);
  auto v = objects_->vector(id);
  e.embedding = Embedding(std::vector<float>(v.begin(), v.end()));
  return e;
}

const SceneInfo* VisualIndex::scene(const ImageSignature& sig) const {
  auto it = scenes_.find(sig);
  return it == scenes_.end() ? nullptr : &it->second;
}

std::optional<uint32_t> VisualIndex::product_id(const ImageSignature& sig) const {
  auto it = product_ids_.find(sig);
  if (it == product_ids_.end()) return std::nullopt;
  return it->second;
}

void VisualIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  objects_->save(dir / "objects.vpga");
  products_->save(dir / "products.vpga");
  {
    std::ofstream out(dir / "objects.jsonl", std::ios::trunc);
    for (const auto& o : object_meta_) {
      out << nlohmann::json{{"parent", o.parent.to_hex()},
                            {"ordinal", o.ordinal},
                            {"box", box_to_json(o.box)},
                            {"category", o.category.name()},
                            {"confidence", o.confidence}}
                 .dump()
          << '\n';
    }
  }
  {
    // Sorted for byte-stable output.
    std::map<ImageSignature, const SceneInfo*> sorted;
    for (const auto& [sig, info] : scenes_) sorted.emplace(sig, &info);
    std::ofstream out(dir / "scenes.jsonl", std::ios::trunc);
    for (const auto& [sig, info] : sorted) {
      out << nlohmann::json{{"signature", sig.to_hex()},
                            {"near_dup", u64_hex(info->near_dup.bits)},
                            {"domain", domain_name(info->domain)},
                            {"full_embedding", embedding_to_base64(info->full_embedding)}}
                 .dump()
          << '\n';
    }
  }
  {
    std::ofstream out(dir / "products.jsonl", std::ios::trunc);
    for (const auto& p : catalog_) {
      auto j = product_to_json(p);
      j.erase("embedding");
      out << j.dump() << '\n';
    }
  }
  nlohmann::json report = report_.to_json();
  report["objects"] = object_meta_.size();
  report["products"] = catalog_.size();
  report["near_dup_seed"] = u64_hex(near_dup_seed_);
  std::ofstream out(dir / "report.json", std::ios::trunc);
  if (!out) throw StoreError("cannot write index report in " + dir.string());
  out << report.dump(2) << '\n';
}

VisualIndex VisualIndex::load(const std::filesystem::path& dir) {
  VisualIndex index;
  index.objects_ = std::make_unique<HnswIndex>(HnswIndex::load(dir / "objects.vpga"));
  index.products_ = std::make_unique<HnswIndex>(HnswIndex::load(dir / "products.vpga"));
  read_jsonl(dir / "objects.jsonl", [&](const nlohmann::json& j) {
    ObjectIndexEntry o;
    o.parent = ImageSignature::from_hex(j.at("parent").get<std::string>());
    o.ordinal = j.at("ordinal").get<uint32_t>();
    o.box = box_from_json(j.at("box"));
    o.category = Category::from_name(j.at("category").get<std::string>());
    o.confidence = j.at("confidence").get<float>();
    index.object_meta_.push_back(std::move(o));
  });
  read_jsonl(dir / "scenes.jsonl", [&](const nlohmann::json& j) {
    SceneInfo s;
    s.signature = ImageSignature::from_hex(j.at("signature").get<std::string>());
    s.near_dup = NearDupSignature{hex_u64(j.at("near_dup").get<std::string>())};
    s.domain = domain_from_name(j.at("domain").get<std::string>());
    s.full_embedding = embedding_from_base64(j.at("full_embedding").get<std::string>());
    index.scenes_.emplace(s.signature, std::move(s));
  });
  read_jsonl(dir / "products.jsonl", [&](const nlohmann::json& j) {
    ProductEntry p;
    p.signature = ImageSignature::from_hex(j.at("signature").get<std::string>());
    p.category = Category::from_name(j.at("category").get<std::string>());
    p.in_stock = j.value("in_stock", true);
    p.legitimate_domain = j.value("legitimate_domain", true);
    p.safe = j.value("safe", true);
    index.product_ids_[p.signature] = static_cast<uint32_t>(index.catalog_.size());
    index.catalog_.push_back(std::move(p));
  });
  std::ifstream report_in(dir / "report.json");
  if (report_in) {
    auto r = nlohmann::json::parse(report_in, nullptr, false);
    if (!r.is_discarded()) {
      index.report_.input_count = r.value("input_count", size_t{0});
      index.report_.kept_count = r.value("kept_count", size_t{0});
      index.report_.objects_dropped = r.value("objects_dropped", size_t{0});
      if (r.contains("rejects")) {
        for (auto& [k, v] : r["rejects"].items()) index.report_.rejects[k] = v.get<size_t>();
      }
      if (r.contains("near_dup_seed")) index.near_dup_seed_ = hex_u64(r["near_dup_seed"].get<std::string>());
    }
  }
  if (index.object_meta_.size() != index.objects_->size() || index.catalog_.size() != index.products_->size()) {
    throw FormatError(dir.string() + ": index metadata does not match the ANN files");
  }
  return index;
}

std::vector<ImageSignature> mine_similar_examples(std::span<const ImageSignature> seeds, const VisualIndex& index,
                                                  const FeatureStore& store, size_t k) {
  if (k == 0) return {};
  const std::unordered_set<ImageSignature> seed_set(seeds.begin(), seeds.end());
  std::unordered_map<ImageSignature, float> best;
  for (const auto& seed : seeds) {
    auto entry = store.get(seed);
    if (!entry) throw UnknownEntityError("seed " + seed.to_hex() + " is not in the feature store");
    // Widen the object query until k distinct parents are found or the index is exhausted.
    std::vector<std::pair<float, ImageSignature>> parents;
    for (size_t want = std::max<size_t>(4 * k, 32);; want *= 2) {
      auto hits = index.objects().search(entry->full_embedding.values(), want,
                                         std::max<size_t>(want, index.objects().params().ef_search));
      std::unordered_map<ImageSignature, float> per_seed;
      for (const auto& n : hits) {
        const auto& parent = index.object_meta(n.id).parent;
        if (seed_set.count(parent)) continue;
        auto [it, inserted] = per_seed.emplace(parent, n.distance);
        if (!inserted) it->second = std::min(it->second, n.distance);
      }
      parents.clear();
      for (const auto& [sig, d] : per_seed) parents.emplace_back(d, sig);
      if (parents.size() >= k || hits.size() < want) break;
    }
    std::sort(parents.begin(), parents.end());
    if (parents.size() > k) parents.resize(k);
    for (const auto& [d, sig] : parents) {
      auto [it, inserted] = best.emplace(sig, d);
      if (!inserted) it->second = std::min(it->second, d);
    }
  }
  std::vector<std::pair<float, ImageSignature>> merged;
  for (const auto& [sig, d] : best) merged.emplace_back(d, sig);
  std::sort(merged.begin(), merged.end());
  std::vector<ImageSignature> out;
  for (const auto& [d, sig] : merged) out.push_back(sig);
  return out;
}

}  // namespace vpg
