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

#include "vpg/forward_stl.h"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "vpg/errors.h"
#include "vpg/random.h"

namespace vpg {

std::string_view gender_name(Gender g) {
  switch (g) {
    case Gender::kFemale:
      return "female";
    case Gender::kMale:
      return "male";
    case Gender::kNonBinary:
      return "nonbinary";
    case Gender::kUnspecified:
      break;
  }
  return "unspecified";
}

Gender gender_from_name(std::string_view name) {
  if (name == "f" || name == "female") return Gender::kFemale;
  if (name == "m" || name == "male") return Gender::kMale;
  if (name == "nb" || name == "nonbinary") return Gender::kNonBinary;
  if (name.empty() || name == "u" || name == "unspecified") return Gender::kUnspecified;
  throw InvalidArgument("unknown gender '" + std::string(name) + "'");
}

UserContext UserContext::make(std::string_view gender, std::string_view country) {
  UserContext ctx;
  ctx.gender = gender_from_name(gender);
  if (country.empty() || country == "unspecified") {
    ctx.country = "unspecified";
  } else {
    if (country.size() != 2 || !std::isalpha(static_cast<unsigned char>(country[0])) ||
        !std::isalpha(static_cast<unsigned char>(country[1]))) {
      throw InvalidArgument("country must be a two-letter ISO 3166 code, got '" + std::string(country) + "'");
    }
    ctx.country = {static_cast<char>(std::toupper(static_cast<unsigned char>(country[0]))),
                   static_cast<char>(std::toupper(static_cast<unsigned char>(country[1])))};
  }
  return ctx;
}

UserContext UserContext::parse(std::string_view text) {
  std::string_view gender, country;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view part = text.substr(pos, comma - pos);
    const size_t eq = part.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("context field '" + std::string(part) + "' is not k=v");
    const auto key = part.substr(0, eq);
    const auto value = part.substr(eq + 1);
    if (key == "gender") {
      gender = value;
    } else if (key == "country") {
      country = value;
    } else {
      throw InvalidArgument("unknown context field '" + std::string(key) + "'");
    }
    pos = comma + 1;
  }
  return make(gender, country);
}

nlohmann::json UserContext::to_json() const { return {{"gender", gender_name(gender)}, {"country", country}}; }

size_t CacheKeyHash::operator()(const CacheKey& k) const noexcept {
  return static_cast<size_t>(mix64(ImageSignatureHash{}(k.scene) ^ hash_string(k.ctx.country) ^
                                   (static_cast<uint64_t>(k.ctx.gender) << 56)));
}

ForwardConfig ForwardConfig::read(ConfigReader& r, const std::string& p) {
  ForwardConfig c;
  auto count = [&](const char* key, size_t def, int64_t lo, int64_t hi) {
    return static_cast<size_t>(r.get_int(p + key, static_cast<int64_t>(def), lo, hi));
  };
  c.max_objects = count("max_objects", c.max_objects, 1, 64);
  c.per_object_k = count("per_object_k", c.per_object_k, 1, 1000);
  c.n_out = count("n_out", c.n_out, 1, 1000);
  c.ttl_seconds = r.get_int(p + "ttl_seconds", c.ttl_seconds, 0, 365LL * 24 * 3600);
  c.cache_capacity = count("cache_capacity", c.cache_capacity, 0, 100'000'000);
  c.parallelism = count("parallelism", c.parallelism, 1, 256);
  c.max_batch = count("max_batch", c.max_batch, 1, 1000);
  return c;
}

std::vector<DetectedObject> decompose_scene(const SceneEntry& scene, size_t max_objects) {
  std::vector<DetectedObject> objects = scene.objects;
  std::stable_sort(objects.begin(), objects.end(),
                   [](const DetectedObject& a, const DetectedObject& b) { return a.confidence > b.confidence; });
  if (objects.size() > max_objects) objects.resize(max_objects);
  return objects;
}

std::vector<std::vector<ProductCandidate>> retrieve_products(std::span<const DetectedObject> objects,
                                                             const VisualIndex& index, size_t per_object_k) {
  std::vector<Embedding> queries;
  queries.reserve(objects.size());
  for (const auto& o : objects) queries.push_back(o.embedding);
  auto hits = index.products().search_batch(queries, per_object_k);
  std::vector<std::vector<ProductCandidate>> out(objects.size());
  for (size_t i = 0; i < hits.size(); ++i) {
    for (const auto& n : hits[i]) out[i].push_back(ProductCandidate{index.product(n.id), n.distance, uint32_t(i)});
  }
  return out;
}

std::vector<std::vector<ProductCandidate>> filter_candidates(std::span<const std::vector<ProductCandidate>> cands,
                                                             std::span<const DetectedObject> objects) {
  if (cands.size() != objects.size()) throw InvalidArgument("one candidate list per object expected");
  std::vector<std::vector<ProductCandidate>> out(cands.size());
  for (size_t i = 0; i < cands.size(); ++i) {
    const Domain want = objects[i].category.domain();
    for (const auto& c : cands[i]) {
      if (c.product.safe && c.product.category.domain() == want) out[i].push_back(c);
    }
  }
  return out;
}

std::vector<ProductCandidate> round_robin_merge(std::span<const std::vector<ProductCandidate>> cands, size_t n_out) {
  std::vector<ProductCandidate> out;
  std::unordered_set<ImageSignature> emitted;
  size_t longest = 0;
  for (const auto& list : cands) longest = std::max(longest, list.size());
  for (size_t round = 0; round < longest && out.size() < n_out; ++round) {
    for (const auto& list : cands) {
      if (out.size() >= n_out) break;
      if (round >= list.size()) continue;
      const auto& c = list[round];
      if (emitted.insert(c.product.signature).second) out.push_back(c);
    }
  }
  return out;
}

nlohmann::json ForwardResult::to_json() const {
  nlohmann::json products_json = nlohmann::json::array();
  for (const auto& c : products) {
    products_json.push_back({{"product", c.product.signature.to_hex()},
                             {"category", c.product.category.name()},
                             {"distance", c.distance},
                             {"object_rank", c.object_rank}});
  }
  return {{"scene", scene.to_hex()},
          {"context", ctx.to_json()},
          {"served_from_cache", served_from_cache},
          {"products", products_json}};
}

ForwardStl::ForwardStl(const VisualIndex& index, FeatureStore& store, Extractor extractor, ForwardConfig config,
                       Clock clock)
    : index_(index),
      store_(store),
      extractor_(std::move(extractor)),
      config_(config),
      clock_(std::move(clock)),
      cache_(config.cache_capacity, config.ttl_seconds * 1000) {}

std::vector<DetectedObject> ForwardStl::decompose(const ImageSignature& scene) {
  try {
    return decompose_scene(store_.get_or_extract(scene, extractor_).entry, config_.max_objects);
  } catch (const ExtractionError& e) {
    throw UnknownEntityError("no features for scene " + scene.to_hex() + ": " + e.what());
  }
}

std::vector<ProductCandidate> ForwardStl::compute(const ImageSignature& scene) {
  pipeline_executions_.fetch_add(1, std::memory_order_relaxed);
  auto objects = decompose(scene);
  if (objects.empty()) return {};
  index_queries_.fetch_add(1, std::memory_order_relaxed);
  objects_queried_.fetch_add(objects.size(), std::memory_order_relaxed);
  auto cands = retrieve_products(objects, index_, config_.per_object_k);
  auto kept = filter_candidates(cands, objects);
  return round_robin_merge(kept, config_.n_out);
}

ForwardResult ForwardStl::lookup(const ImageSignature& scene, const UserContext& ctx) {
  const CacheKey key{scene, ctx};
  ForwardResult r;
  r.scene = scene;
  r.ctx = ctx;
  if (auto cached = cache_.get(key, clock_())) {
    r.products = std::move(*cached);
    r.served_from_cache = true;
    return r;
  }

  std::promise<std::vector<ProductCandidate>> promise;
  std::shared_future<std::vector<ProductCandidate>> pending;
  {
    std::lock_guard lock(inflight_mu_);
    if (auto it = inflight_.find(key); it != inflight_.end()) {
      pending = it->second;
    } else if (cache_.contains_fresh(key, clock_())) {
      // Another caller finished between the probe above and taking the lock.
      if (auto cached = cache_.get(key, clock_())) {
        r.products = std::move(*cached);
        r.served_from_cache = true;
        return r;
      }
    }
    if (!pending.valid()) inflight_.emplace(key, promise.get_future().share());
  }
  if (pending.valid()) {
    r.products = pending.get();
    return r;
  }

  auto finish = [&] {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(key);
  };
  try {
    auto products = compute(scene);
    cache_.put(key, products, clock_());
    promise.set_value(products);
    finish();
    r.products = std::move(products);
    return r;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

std::map<ImageSignature, BatchItem> ForwardStl::batch(std::span<const ImageSignature> scenes, const UserContext& ctx) {
  if (scenes.size() > config_.max_batch) {
    throw InvalidArgument("batch of " + std::to_string(scenes.size()) + " scenes exceeds the limit of " +
                          std::to_string(config_.max_batch));
  }
  std::vector<ImageSignature> unique;
  std::unordered_set<ImageSignature> seen;
  for (const auto& s : scenes) {
    if (seen.insert(s).second) unique.push_back(s);
  }
  std::vector<BatchItem> items(unique.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < unique.size(); i = next.fetch_add(1)) {
      try {
        items[i].result = lookup(unique[i], ctx);
      } catch (const std::exception& e) {
        items[i].error = e.what();
      }
    }
  };
  // Cached scenes return immediately; only misses occupy the extra workers.
  const size_t workers = std::min(config_.parallelism, unique.size());
  std::vector<std::thread> threads;
  for (size_t t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::map<ImageSignature, BatchItem> out;
  for (size_t i = 0; i < unique.size(); ++i) out.emplace(unique[i], std::move(items[i]));
  return out;
}

ForwardMetrics ForwardStl::metrics() const {
  ForwardMetrics m;
  m.pipeline_executions = pipeline_executions_.load();
  m.index_queries = index_queries_.load();
  m.objects_queried = objects_queried_.load();
  m.cache = cache_.stats();
  return m;
}

}  // namespace vpg
