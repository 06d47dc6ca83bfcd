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

#include "vpg/engine.h"

#include "vpg/catalog.h"
#include "vpg/errors.h"
#include "vpg/log.h"

namespace vpg {

HnswParams read_hnsw_params(ConfigReader& r, const std::string& p) {
  HnswParams h;
  h.M = static_cast<uint32_t>(r.get_int(p + "M", h.M, 2, 256));
  h.ef_construction = static_cast<uint32_t>(r.get_int(p + "ef_construction", h.ef_construction, 1, 100000));
  h.ef_search = static_cast<uint32_t>(r.get_int(p + "ef_search", h.ef_search, 1, 100000));
  h.seed = r.get_u64(p + "seed", h.seed);
  return h;
}

EngineConfig EngineConfig::read(ConfigReader& r) {
  EngineConfig c;
  c.store_dir = r.get_string("store_dir", c.store_dir.string());
  c.index_dir = r.get_string("index_dir", c.index_dir.string());
  c.catalog_path = r.get_string("catalog_path", c.catalog_path.string());
  c.hnsw = read_hnsw_params(r);
  c.filters = FilterConfig::read(r, "filters.");
  c.reverse = ReverseConfig::read(r);
  c.forward = ForwardConfig::read(r, "forward.");
  c.world = WorldConfig::read(r, "world.");
  c.bind = r.get_string("service.bind", c.bind);
  c.port = static_cast<int>(r.get_int("service.port", c.port, 0, 65535));
  c.log_level = r.get_string("log_level", c.log_level);
  try {
    log_level_from_name(c.log_level);
  } catch (const Error&) {
    r.add_violation("log_level: unknown level '" + c.log_level + "'");
  }
  return c;
}

EngineConfig EngineConfig::load(const std::optional<std::filesystem::path>& file,
                                std::span<const std::string> overrides) {
  ConfigReader reader = file ? ConfigReader::from_file(*file) : ConfigReader();
  for (const auto& o : overrides) reader.set_assignment(o);
  EngineConfig c = read(reader);
  reader.finish();
  return c;
}

Engine::Engine(EngineConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {}

Engine::~Engine() = default;

const SyntheticWorld& Engine::world() {
  std::call_once(world_once_, [this] {
    const int64_t start = system_now_ms();
    world_ = std::make_unique<SyntheticWorld>(config_.world);
    log_event(LogLevel::kInfo, "world.generated",
              {{"products", world_->products().size()},
               {"scenes", world_->scenes().size()},
               {"ms", system_now_ms() - start}});
  });
  return *world_;
}

Extractor Engine::extractor() {
  return [this](const ImageSignature& sig) {
    const SyntheticWorld& w = world();
    if (!w.find_scene(sig) && !w.find_product(sig)) throw ExtractionError("unknown image " + sig.to_hex());
    return w.extract(sig);
  };
}

FeatureStore& Engine::store() {
  std::lock_guard lock(store_mu_);
  if (!store_) {
    FeatureStore::Options options;
    options.clock = clock_;
    store_ = FeatureStore::open(config_.store_dir, options);
  }
  return *store_;
}

FilterReport Engine::build_index() {
  std::vector<ProductEntry> catalog;
  if (std::filesystem::exists(config_.catalog_path)) catalog = read_products_jsonl(config_.catalog_path);
  IndexBuildOptions options;
  options.filters = config_.filters;
  options.hnsw = config_.hnsw;
  const int64_t start = system_now_ms();
  VisualIndex index = VisualIndex::build(store(), catalog, options);
  index.save(config_.index_dir);
  log_event(LogLevel::kInfo, "index.built",
            {{"objects", index.object_count()},
             {"scenes", index.scene_count()},
             {"products", index.product_count()},
             {"ms", system_now_ms() - start},
             {"dir", config_.index_dir.string()}});
  return index.report();
}

void Engine::load() {
  ready_ = false;
  index_ = std::make_unique<VisualIndex>(VisualIndex::load(config_.index_dir));
  reverse_ = std::make_unique<ReverseStl>(*index_, store(), extractor(), config_.reverse);
  forward_ = std::make_unique<ForwardStl>(*index_, store(), extractor(), config_.forward, clock_);
  if (std::filesystem::exists(config_.calibration_path())) {
    calibration_ = RelevanceCalibration::load(config_.calibration_path());
  }
  ready_ = true;
  log_event(LogLevel::kInfo, "engine.loaded",
            {{"objects", index_->object_count()},
             {"products", index_->product_count()},
             {"calibrated", calibration_.has_value()}});
}

const VisualIndex& Engine::index() const {
  if (!index_) throw InvalidArgument("index not loaded");
  return *index_;
}

RelevanceCalibration Engine::calibrate(size_t queries) {
  if (!reverse_) throw InvalidArgument("index not loaded");
  const size_t n = index_->product_count();
  std::vector<ImageSignature> sample;
  const size_t take = std::min(queries, n);
  for (size_t i = 0; i < take; ++i) sample.push_back(index_->product(static_cast<uint32_t>(i * n / take)).signature);
  RelevanceCalibration cal = reverse_->calibrate(sample, config_.reverse.percentile);
  cal.save(config_.calibration_path());
  calibration_ = cal;
  log_event(LogLevel::kInfo, "relevance.calibrated", cal.to_json());
  return cal;
}

ReverseResult Engine::reverse(const ImageSignature& product) const {
  if (!reverse_) throw InvalidArgument("index not loaded");
  if (!calibration_) throw InvalidArgument("no relevance calibration; run `vpg calibrate` first");
  ++reverse_queries_;
  return reverse_->query(product, *calibration_);
}

ForwardResult Engine::forward(const ImageSignature& scene, const UserContext& ctx) {
  if (!forward_) throw InvalidArgument("index not loaded");
  return forward_->lookup(scene, ctx);
}

std::map<ImageSignature, BatchItem> Engine::forward_batch(std::span<const ImageSignature> scenes,
                                                          const UserContext& ctx) {
  if (!forward_) throw InvalidArgument("index not loaded");
  return forward_->batch(scenes, ctx);
}

nlohmann::json Engine::metrics() const {
  nlohmann::json out = nlohmann::json::object();
  if (store_) {
    const StoreMetrics m = store_->metrics();
    out["store"] = {{"lookups", m.lookups},
                    {"hits", m.hits},
                    {"fallback_extractions", m.fallback_extractions},
                    {"hit_rate", m.hit_rate()},
                    {"entries", store_->size()}};
  }
  if (forward_) {
    const ForwardMetrics m = forward_->metrics();
    out["forward"] = {{"pipeline_executions", m.pipeline_executions},
                      {"index_queries", m.index_queries},
                      {"objects_queried", m.objects_queried},
                      {"cache",
                       {{"hits", m.cache.hits},
                        {"misses", m.cache.misses},
                        {"expirations", m.cache.expirations},
                        {"evictions", m.cache.evictions},
                        {"hit_rate", m.cache.hit_rate()}}}};
  }
  out["reverse"] = {{"queries", reverse_queries_.load()}};
  return out;
}

}  // namespace vpg
