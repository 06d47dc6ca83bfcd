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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "test_util.h"
#include "vpg/ann_index.h"
#include "vpg/clock.h"
#include "vpg/embedding_ops.h"
#include "vpg/eval.h"
#include "vpg/feature_store.h"
#include "vpg/forward_stl.h"
#include "vpg/nms.h"
#include "vpg/oversample.h"
#include "vpg/reverse_stl.h"
#include "vpg/synthetic_world.h"
#include "vpg/triplet_miner.h"
#include "vpg/visual_index.h"

namespace vpg {
namespace {

using testing::TempDir;
using Seconds = std::chrono::duration<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return Seconds(std::chrono::steady_clock::now() - since).count();
}

// A world served end to end: store backfilled with every scene, index built
// over the store plus the catalog, both retrieval directions constructed.
struct Pipeline {
  explicit Pipeline(const WorldConfig& wc) : world(wc) {
    store = FeatureStore::open(dir / "store");
    store->backfill(world.scene_entries());
    index = std::make_unique<VisualIndex>(VisualIndex::build(*store, world.product_entries(), {}));
    extractor = [this](const ImageSignature& s) { return world.extract(s); };
    reverse = std::make_unique<ReverseStl>(*index, *store, extractor);
  }

  // Calibration queries stride evenly over the indexed catalog.
  RelevanceCalibration calibrate(size_t n) const {
    std::vector<ImageSignature> queries;
    for (size_t i = 0; i < n; ++i) queries.push_back(index->product(i * index->product_count() / n).signature);
    return reverse->calibrate(queries, reverse->config().percentile);
  }

  // Products depicted by at least one indexed object.
  std::set<uint32_t> indexed_products() const {
    std::set<uint32_t> out;
    for (uint32_t id = 0; id < index->object_count(); ++id) {
      const auto& meta = index->object_meta(id);
      if (auto p = world.product_at(meta.parent, meta.box)) out.insert(*p);
    }
    return out;
  }

  bool scene_shows(const ImageSignature& scene, uint32_t product) const {
    const SceneTruth* s = world.find_scene(scene);
    if (s == nullptr) return false;
    return std::any_of(s->objects.begin(), s->objects.end(), [&](const auto& o) { return o.product_id == product; });
  }

  TempDir dir;
  SyntheticWorld world;
  std::unique_ptr<FeatureStore> store;
  std::unique_ptr<VisualIndex> index;
  Extractor extractor;
  std::unique_ptr<ReverseStl> reverse;
};

WorldConfig noisy_reference() {
  WorldConfig wc;
  wc.noise_sigma = 0.1;
  return wc;
}

// Criterion 1: noiseless reference world, both directions exact.
Outcome reference_retrieval(std::unique_ptr<Pipeline>& out) {
  const auto start = std::chrono::steady_clock::now();
  out = std::make_unique<Pipeline>(WorldConfig{});
  Pipeline& p = *out;
  const auto cal = p.calibrate(p.reverse->config().calibration_size);

  const auto present = p.indexed_products();
  size_t es1 = 0;
  for (uint32_t id : present) {
    const auto r = p.reverse->query(p.world.product(id).signature, cal);
    if (!r.scenes.empty() && p.scene_shows(r.scenes[0].scene, id)) ++es1;
  }
  const double reverse_es1 = present.empty() ? 0.0 : static_cast<double>(es1) / present.size();

  ForwardStl fwd(*p.index, *p.store, p.extractor);
  size_t exact = 0;
  for (const auto& s : p.world.scenes()) {
    auto objects = p.store->get(s.signature)->objects;
    std::stable_sort(objects.begin(), objects.end(),
                     [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    if (objects.size() > 4) objects.resize(4);
    std::vector<ImageSignature> expected;
    for (const auto& o : objects) {
      const auto sig = p.world.product(*p.world.product_at(s.signature, o.box)).signature;
      if (std::find(expected.begin(), expected.end(), sig) == expected.end()) expected.push_back(sig);
    }
    if (expected.size() > 3) expected.resize(3);
    std::vector<ImageSignature> got;
    for (const auto& c : fwd.compute(s.signature)) got.push_back(c.product.signature);
    exact += got == expected;
  }
  const double forward_exact = static_cast<double>(exact) / p.world.scenes().size();
  const double seconds = elapsed(start);
  return {reverse_es1 == 1.0 && forward_exact >= 0.99 && seconds < 60.0,
          fmt("reverse ES@1 %.4f over %zu indexed products (%zu of %zu products indexed); forward top-3 exact "
              "%.4f over %zu scenes; %.1fs end to end (limit 60s)",
              reverse_es1, present.size(), present.size(), p.world.products().size(), forward_exact,
              p.world.scenes().size(), seconds)};
}

// Criterion 2: graph index recall against exhaustive search.
Outcome ann_recall_criterion(const SyntheticWorld& world) {
  std::vector<Embedding> corpus;
  for (const auto& s : world.scenes()) {
    for (const auto& o : s.objects) {
      if (corpus.size() < 10000) corpus.push_back(world.embed(s.signature, o.box));
    }
  }
  std::vector<Embedding> queries;
  for (const auto& prod : world.products()) queries.push_back(world.embed(prod.signature));
  auto hnsw = HnswIndex::build(corpus);
  const auto exact = BruteForceIndex::from(corpus);

  std::vector<double> recalls;
  const std::vector<uint32_t> efs{16, 64, 128, 256};
  for (uint32_t ef : efs) {
    hnsw.set_ef_search(ef);
    recalls.push_back(ann_recall(hnsw, exact, queries, 10));
  }
  const bool monotone = std::is_sorted(recalls.begin(), recalls.end());
  const double at_default = recalls[2];

  std::mt19937_64 rng(2);
  std::vector<Embedding> random_corpus;
  for (int i = 0; i < 10000; ++i) random_corpus.push_back(testing::random_unit_embedding(rng, world.dimension()));
  std::vector<Embedding> random_queries;
  for (int i = 0; i < 200; ++i) random_queries.push_back(testing::random_unit_embedding(rng, world.dimension()));
  const auto random_hnsw = HnswIndex::build(random_corpus);
  const double random_recall =
      ann_recall(random_hnsw, BruteForceIndex::from(random_corpus), random_queries, 10);

  return {at_default >= 0.95 && monotone,
          fmt("recall@10 over %zu objects x %zu queries: ef16 %.4f, ef64 %.4f, ef128 %.4f (default), ef256 %.4f; "
              "monotone %s; unstructured random corpus at ef128 %.4f (informational)",
              corpus.size(), queries.size(), recalls[0], recalls[1], recalls[2], recalls[3],
              monotone ? "yes" : "no", random_recall)};
}

// Criterion 3: noisy world. Served ES@1 follows the precision@k definition,
// so queries the relevance filter empties are excluded and reported; the
// pre-filter ES@1 counts every query whose product is indexed.
Outcome noisy_retrieval(const Pipeline& p) {
  const auto cal = p.calibrate(p.reverse->config().calibration_size);
  std::vector<nlohmann::json> lines;
  for (const auto& prod : p.world.products()) lines.push_back(p.reverse->query(prod.signature, cal).to_json());
  const auto truth = WorldTruth::from_world(p.world);
  const auto rated = rate_predictions(lines, truth, 1.0);
  const auto served = precision_at_k(rated, 1, RelevanceLevel::kExtremelySimilar);

  const auto present = p.indexed_products();
  size_t top1 = 0;
  for (uint32_t id : present) {
    const auto cands = p.reverse->retrieve_scenes(p.world.product(id).signature);
    if (!cands.empty() && p.scene_shows(cands[0].scene, id)) ++top1;
  }
  const double prefilter = present.empty() ? 0.0 : static_cast<double>(top1) / present.size();
  const double coverage = static_cast<double>(served.evaluated) / rated.size();
  return {served.precision >= 0.90 && prefilter >= 0.90,
          fmt("served ES@1 %.4f over %zu answered queries (%zu of %zu emptied by the relevance filter, coverage "
              "%.3f, threshold %.4f); pre-filter ES@1 %.4f over %zu indexed products",
              served.precision, served.evaluated, served.excluded.size(), rated.size(), coverage, cal.threshold,
              prefilter, present.size())};
}

SceneCandidate cand(uint64_t id, float score, std::vector<float> emb, uint64_t near_dup) {
  SceneCandidate c;
  c.scene = ImageSignature::derive(3, "scene", id);
  c.score = score;
  c.scene_embedding = Embedding(std::move(emb));
  c.near_dup = NearDupSignature{near_dup};
  return c;
}

// One randomized filter/dedup/rerank run. Returns the first violated
// invariant, or an empty string, and appends the final ordering to `trace`.
std::string pipeline_trial(std::mt19937_64& rng, std::string& trace) {
  std::uniform_real_distribution<float> u(-2, 0);
  const size_t n = 1 + rng() % 40;
  std::vector<SceneCandidate> in;
  for (size_t i = 0; i < n; ++i) {
    const uint64_t id = rng() % (n + 3);
    uint64_t bits = rng();
    if (!in.empty() && rng() % 4 == 0) bits = in[rng() % in.size()].near_dup.bits ^ (1ULL << (rng() % 64));
    in.push_back(cand(id, u(rng), {u(rng), u(rng), u(rng)}, bits));
  }
  std::sort(in.begin(), in.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  const RelevanceCalibration cal{double(u(rng)), 100, 0.75};
  const auto f = relevance_filter(in, cal);
  size_t below = 0;
  for (const auto& c : in) below += c.score < cal.threshold;
  if (f.size() + below != in.size()) return "relevance filter lost or invented candidates";
  for (const auto& c : f) {
    if (c.score < cal.threshold) return "candidate below threshold survived";
  }
  if (relevance_filter(f, cal) != f) return "relevance filter not idempotent";

  const int hmax = static_cast<int>(rng() % 10);
  const auto d = dedup(f, hmax);
  if (dedup(d, hmax) != d) return "dedup not idempotent";
  for (size_t i = 0; i < d.size(); ++i) {
    for (size_t j = i + 1; j < d.size(); ++j) {
      if (d[i].scene == d[j].scene) return "duplicate scene survived dedup";
      if (hamming_distance(d[i].near_dup, d[j].near_dup) <= hmax) return "near-duplicate pair survived dedup";
    }
  }
  if (d.empty()) return "";
  const double lambda = static_cast<double>(rng() % 3) * 0.5;
  const auto r = rerank(d, 10, lambda);
  if (r.size() != std::min<size_t>(10, d.size())) return "rerank returned the wrong count";
  if (!(r[0] == d[0])) return "rerank moved the top slot";
  std::set<ImageSignature> from;
  for (const auto& c : d) from.insert(c.scene);
  std::set<ImageSignature> seen;
  for (const auto& c : r) {
    if (!from.count(c.scene)) return "rerank invented a scene";
    if (!seen.insert(c.scene).second) return "rerank repeated a scene";
    trace += c.scene.to_hex();
  }
  trace += '\n';
  return "";
}

// Criterion 4: pipeline invariants, plus byte-identical replay of both the
// randomized runs and real queries against a saved and reloaded index.
Outcome pipeline_invariants(Pipeline& p) {
  std::string first_trace;
  std::string violation;
  size_t violations = 0;
  {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
      auto v = pipeline_trial(rng, first_trace);
      if (!v.empty()) {
        ++violations;
        if (violation.empty()) violation = v;
      }
    }
  }
  std::string second_trace;
  {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 1000; ++trial) pipeline_trial(rng, second_trace);
  }

  const auto cal = p.calibrate(p.reverse->config().calibration_size);
  p.index->save(p.dir / "index");
  const auto reloaded = VisualIndex::load(p.dir / "index");
  ReverseStl replay(reloaded, *p.store, p.extractor);
  size_t identical = 0;
  const size_t queries = 200;
  for (size_t i = 0; i < queries; ++i) {
    const auto& sig = p.world.products()[i * 5].signature;
    const std::string a = p.reverse->query(sig, cal).to_json().dump();
    const std::string b = p.reverse->query(sig, cal).to_json().dump();
    const std::string c = replay.query(sig, cal).to_json().dump();
    identical += a == b && a == c;
  }
  const bool replayed = first_trace == second_trace;
  return {violations == 0 && replayed && identical == queries,
          fmt("%zu/1000 randomized pipelines violated an invariant%s%s; randomized replay %s; %zu/%zu real queries "
              "byte-identical across repeat and reloaded index",
              violations, violation.empty() ? "" : ", first: ", violation.c_str(),
              replayed ? "identical" : "differs", identical, queries)};
}

// Criterion 5: store durability and hit-rate accounting.
Outcome store_criterion(const SyntheticWorld& world) {
  TempDir dir;
  std::map<ImageSignature, SceneEntry> model;
  auto canonical = [](const SceneEntry& e) { return decode_scene(encode_scene(e)); };
  const auto extractor = [&world](const ImageSignature& s) { return world.extract(s); };
  size_t fallback_hits = 0;
  double hit_rate = 0;
  StoreMetrics metrics;
  {
    auto store = FeatureStore::open(dir / "store");
    // Explicit timestamps so the store keeps exactly what was written.
    auto entries = world.scene_entries();
    for (size_t i = 0; i < entries.size(); ++i) entries[i].ingested_at = 1'700'000'000'000 + static_cast<int64_t>(i);
    store->backfill(entries);
    for (const auto& e : entries) model[e.signature] = canonical(e);

    for (size_t i = 0; i < 1000; ++i) {
      SceneEntry e = entries[i];
      if (!e.objects.empty()) e.objects.pop_back();
      e.ingested_at += 1000;
      e.source = EntrySource::kStream;
      store->apply_update(e);
      model[e.signature] = canonical(e);
    }
    for (size_t i = 0; i < 100; ++i) {
      const auto r = store->get_or_extract(world.products()[i].signature, extractor);
      fallback_hits += r.hit;
      model[r.entry.signature] = r.entry;
    }

    store->reset_metrics();
    std::mt19937_64 rng(5);
    std::vector<ImageSignature> keys;
    for (const auto& [sig, e] : model) keys.push_back(sig);
    std::vector<ImageSignature> lookups;
    for (int i = 0; i < 992; ++i) lookups.push_back(keys[rng() % keys.size()]);
    for (size_t i = 100; i < 108; ++i) lookups.push_back(world.products()[i].signature);
    std::shuffle(lookups.begin(), lookups.end(), rng);
    for (const auto& sig : lookups) {
      const auto r = store->get_or_extract(sig, extractor);
      model[r.entry.signature] = r.entry;
    }
    metrics = store->metrics();
    hit_rate = metrics.hit_rate();
  }

  auto reopened = FeatureStore::open(dir / "store");
  size_t matching = 0;
  for (const auto& [sig, e] : model) {
    auto got = reopened->get(sig);
    matching += got && *got == e;
  }
  return {fallback_hits == 0 && metrics.lookups == 1000 && hit_rate == 0.992 && reopened->size() == model.size() &&
              matching == model.size(),
          fmt("10000 backfilled, 1000 updated, 100 fallback extractions; hit rate %.4f over %llu lookups (expected "
              "exactly 0.992); reopened store holds %zu entries, %zu/%zu equal to the model",
              hit_rate, static_cast<unsigned long long>(metrics.lookups), reopened->size(), matching, model.size())};
}

// Criterion 6: TTL boundary and single-flight under concurrency.
Outcome ttl_criterion(const Pipeline& p) {
  ManualClock clock;
  ForwardStl fwd(*p.index, *p.store, p.extractor, ForwardConfig{}, clock.as_clock());
  const auto& scene = p.world.scenes()[0].signature;
  const auto first = fwd.lookup(scene, {});
  clock.advance_seconds(7200);
  const auto at_ttl = fwd.lookup(scene, {});
  clock.advance_seconds(1);
  const auto past_ttl = fwd.lookup(scene, {});
  const uint64_t executions = fwd.metrics().pipeline_executions;
  const bool ttl_ok = !first.served_from_cache && at_ttl.served_from_cache && !past_ttl.served_from_cache &&
                      executions == 2 && at_ttl.products == first.products;

  TempDir other;
  auto empty_store = FeatureStore::open(other / "store");
  Extractor slow = [&p](const ImageSignature& s) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return p.world.extract(s);
  };
  ForwardStl cold(*p.index, *empty_store, slow, ForwardConfig{}, clock.as_clock());
  std::vector<ForwardResult> results(32);
  std::vector<std::thread> threads;
  const auto& target = p.world.scenes()[1].signature;
  for (size_t t = 0; t < results.size(); ++t) {
    threads.emplace_back([&, t] { results[t] = cold.lookup(target, {}); });
  }
  for (auto& t : threads) t.join();
  const uint64_t concurrent = cold.metrics().pipeline_executions;
  const bool same = std::all_of(results.begin(), results.end(),
                                [&](const auto& r) { return r.products == results[0].products; });
  return {ttl_ok && concurrent == 1 && same,
          fmt("at 7200s served from cache %s, at 7201s recomputed %s (%llu executions); 32 concurrent identical "
              "requests ran %llu pipeline(s), results identical %s",
              at_ttl.served_from_cache ? "yes" : "no", past_ttl.served_from_cache ? "no" : "yes",
              static_cast<unsigned long long>(executions), static_cast<unsigned long long>(concurrent),
              same ? "yes" : "no")};
}

using TripletKey = std::tuple<TripletQuery, ImageSignature, ImageSignature, int64_t, int64_t>;

// Every (row, row) pair of one query, engagement summed by rescanning.
std::set<TripletKey> brute_force_triplets(const std::vector<EngagementLog>& logs, int window) {
  Day last = logs[0].day;
  for (const auto& r : logs) last = std::max(last, r.day);
  auto in_window = [&](const EngagementLog& r) { return r.day > last - window && r.day <= last; };
  auto engagement = [&](const TripletQuery& q, const ImageSignature& c) {
    int64_t sum = 0;
    for (const auto& r : logs) {
      if (in_window(r) && r.query == q && r.candidate == c) sum += r.closeup_count;
    }
    return sum;
  };
  std::set<TripletKey> out;
  for (const auto& a : logs) {
    for (const auto& b : logs) {
      if (!in_window(a) || !in_window(b) || !(a.query == b.query) || a.candidate == b.candidate) continue;
      const int64_t ea = engagement(a.query, a.candidate);
      const int64_t eb = engagement(b.query, b.candidate);
      if (ea > eb) out.emplace(a.query, a.candidate, b.candidate, ea, eb);
    }
  }
  return out;
}

// Criterion 7: triplet mining against the brute-force oracle, finalized hard
// invariants and the half-hard assembly.
Outcome triplet_criterion() {
  WorldConfig wc;
  wc.dimension = 16;
  wc.products = 200;
  wc.scenes = 600;
  wc.noise_sigma = 0.8;
  wc.min_separation = 0.5;
  const SyntheticWorld world(wc);
  const auto index = VisualIndex::build(world.scene_entries(), world.product_entries(), {});
  auto logs = [&](size_t queries) {
    EngagementLogConfig cfg;
    cfg.queries = queries;
    return synthesize_engagement_logs(world, index, cfg);
  };
  const TripletEmbedder embedder = [&world](const ImageSignature& s, const std::optional<BoundingBox>& box) {
    return box ? world.embed(s, *box) : world.embed(s);
  };
  const auto oracle = world_oracle(world);

  const auto small = logs(50);
  const auto mined = mine_candidate_triplets(small);
  std::set<TripletKey> mined_keys;
  for (const auto& t : mined) mined_keys.emplace(t.query, t.positive, t.negative, t.engagement_pos, t.engagement_neg);
  const bool oracle_equal = mined_keys.size() == mined.size() && mined_keys == brute_force_triplets(small, 30);

  const auto rows = logs(1200);
  std::vector<TripletRecord> hard;
  for (const auto& t : mine_candidate_triplets(rows)) {
    auto checked = hardness_check(t, embedder);
    if (checked.kind == TripletKind::kHard) hard.push_back(checked);
  }
  const auto kept = label_triplets(hard, oracle);
  size_t broken = 0;
  for (const auto& t : kept) {
    const Embedding q = world.embed(t.query.signature, t.query.box);
    const double d_pos = euclidean_distance(q, world.embed(t.positive));
    const double d_neg = euclidean_distance(q, world.embed(t.negative));
    const bool ok = t.kind == TripletKind::kHard && t.engagement_pos > t.engagement_neg && d_pos > d_neg &&
                    t.label_pos == TripletLabel::kMatch && t.label_neg == TripletLabel::kNoMatch &&
                    std::abs(t.d_pos - d_pos) < 1e-5 && std::abs(t.d_neg - d_neg) < 1e-5;
    broken += !ok;
  }

  std::vector<ImageSignature> products;
  for (const auto& prod : world.products()) products.push_back(prod.signature);
  const auto pool = build_random_pool(rows, oracle, products);
  const AssemblyOptions opts{.target_size = 1000, .hard_fraction = 0.5, .seed = 7, .max_negative_draws = 1000};
  const auto data = assemble_dataset(kept, pool, opts, oracle, embedder);
  size_t n_hard = 0;
  size_t n_random = 0;
  size_t bad_random = 0;
  for (const auto& t : data) {
    n_hard += t.kind == TripletKind::kHard;
    if (t.kind == TripletKind::kRandom) {
      ++n_random;
      bad_random += oracle(t.query, t.positive) != TripletLabel::kMatch ||
                    oracle(t.query, t.negative) != TripletLabel::kNoMatch;
    }
  }
  return {oracle_equal && !kept.empty() && broken == 0 && data.size() == 1000 && n_hard == 500 && n_random == 500 &&
              bad_random == 0,
          fmt("50-query log: %zu mined triplets, oracle %s; %zu finalized hard triplets, %zu violating an "
              "invariant; assembled %zu = %zu hard + %zu random (%zu mislabeled random)",
              mined.size(), oracle_equal ? "equal" : "differs", kept.size(), broken, data.size(), n_hard, n_random,
              bad_random)};
}

const Category kTop = Category::from_name("top");

// Criterion 8: metric micro-cases and scaling invariance.
Outcome metric_criterion() {
  auto single = [](BoundingBox pred) {
    return std::vector<DetectionEvalCase>{{{{{0, 0, 10, 10}, kTop}}, {{pred, kTop, 0.9}}}};
  };
  const double map_hit = mean_average_precision(single({0, 0, 10, 6}));
  const double map_miss = mean_average_precision(single({0, 0, 10, 3}));

  DetectionEvalCase dup;
  dup.ground_truth = {{{0, 0, 10, 10}, kTop}, {{50, 50, 10, 10}, kTop}};
  dup.predictions = {{{0, 0, 10, 10}, kTop, 0.9}, {{1, 0, 10, 10}, kTop, 0.8}, {{50, 50, 10, 10}, kTop, 0.7}};
  const double map_dup = mean_average_precision(std::vector<DetectionEvalCase>{dup});

  // 20 objects; 9 TP + 1 FP at conf >= 0.7, then 4 TP + 6 FP below.
  DetectionEvalCase micro;
  for (int i = 0; i < 20; ++i) micro.ground_truth.push_back({{i * 20.0f, 0, 10, 10}, kTop});
  for (int i = 0; i < 9; ++i) micro.predictions.push_back({{i * 20.0f, 0, 10, 10}, kTop, 0.95 - 0.02 * i});
  micro.predictions.push_back({{0, 500, 10, 10}, kTop, 0.72});
  for (int i = 9; i < 13; ++i) micro.predictions.push_back({{i * 20.0f, 0, 10, 10}, kTop, 0.6 - 0.05 * (i - 9)});
  for (int i = 0; i < 6; ++i) micro.predictions.push_back({{i * 20.0f, 300, 10, 10}, kTop, 0.65 - 0.05 * i});
  const double r_at_p90 = recall_at_precision(std::vector<DetectionEvalCase>{micro}, 0.90);

  using L = RelevanceLevel;
  std::vector<RatedQuery> rated;
  for (L level : {L::kExtremelySimilar, L::kSimilar, L::kExtremelySimilar, L::kNotSimilar, L::kExtremelySimilar}) {
    rated.push_back({"q" + std::to_string(rated.size()), {level}});
  }
  const double p_at_1 = precision_at_k(rated, 1, L::kExtremelySimilar).precision;

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> pos(0, 200);
  const Category cats[] = {kTop, Category::from_name("bag"), Category::from_name("sofa")};
  size_t scale_failures = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<DetectionEvalCase> cases(1 + rng() % 5);
    for (auto& c : cases) {
      for (size_t i = 0, n = rng() % 6; i < n; ++i) c.ground_truth.push_back({{pos(rng), pos(rng), 20, 20}, cats[rng() % 3]});
      for (size_t i = 0, n = rng() % 8; i < n; ++i) {
        PredictedBox p{{pos(rng), pos(rng), 20, 20}, cats[rng() % 3], (rng() % 1000 + 1) / 1000.0};
        if (!c.ground_truth.empty() && rng() % 3 != 0) {
          const auto& g = c.ground_truth[rng() % c.ground_truth.size()];
          p.box = {g.box.x + static_cast<float>(rng() % 8), g.box.y, 20, 20};
          p.category = g.category;
        }
        c.predictions.push_back(p);
      }
    }
    const double map = mean_average_precision(cases);
    const double rap = recall_at_precision(cases, 0.9);
    const double scale = 0.05 + static_cast<double>(rng() % 95) / 100.0;
    for (auto& c : cases) {
      for (auto& p : c.predictions) p.confidence *= scale;
    }
    scale_failures += std::abs(mean_average_precision(cases) - map) > 1e-9 ||
                      std::abs(recall_at_precision(cases, 0.9) - rap) > 1e-9;
  }

  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
  return {near(map_hit, 1.0) && near(map_miss, 0.0) && near(map_dup, 5.0 / 6.0) && near(r_at_p90, 0.45) &&
              near(p_at_1, 0.6) && scale_failures == 0,
          fmt("mAP IoU0.6 %.9f (1), IoU0.3 %.9f (0), duplicate %.9f (5/6); R@P90 %.9f (0.45); P@1 %.9f (0.6); "
              "%zu/300 random sets changed under confidence scaling",
              map_hit, map_miss, map_dup, r_at_p90, p_at_1, scale_failures)};
}

// Criterion 9: duplicate-heavy detector output collapses to the true objects.
Outcome nms_criterion() {
  WorldConfig wc;
  wc.dimension = 32;
  wc.products = 200;
  wc.scenes = 2000;
  const SyntheticWorld world(wc);
  const CorruptionConfig corruption{1.0, 0.0};
  size_t raw = 0;
  size_t kept = 0;
  size_t truth = 0;
  size_t wrong_scenes = 0;
  std::vector<DetectionEvalCase> before;
  std::vector<DetectionEvalCase> after;
  for (const auto& s : world.scenes()) {
    const auto dets = world.detect_raw(s, corruption);
    const auto out = class_agnostic_nms(dets, 0.5);
    DetectionEvalCase& b = before.emplace_back();
    DetectionEvalCase& a = after.emplace_back();
    for (const auto& o : s.objects) b.ground_truth.push_back({o.box, o.category});
    a.ground_truth = b.ground_truth;
    for (const auto& d : world.detect(s, corruption)) b.predictions.push_back({d.box, d.category, d.confidence});
    for (const auto& d : out) a.predictions.push_back({d.box, d.category, d.confidence});
    raw += dets.size();
    kept += out.size();
    truth += s.objects.size();
    bool ok = out.size() == s.objects.size();
    for (const auto& o : s.objects) {
      ok = ok && std::count_if(out.begin(), out.end(), [&](const auto& d) { return iou(d.box, o.box) >= 0.5; }) == 1;
    }
    wrong_scenes += !ok;
  }
  const double map_before = mean_average_precision(before);
  const double map_after = mean_average_precision(after);
  return {wrong_scenes == 0 && kept == truth && map_after == 1.0,
          fmt("%zu raw boxes -> %zu after NMS at IoU 0.5 (%.1f%% removed); %zu true objects; %zu/%zu scenes not "
              "recovered exactly; mAP %.4f raw, %.4f after NMS",
              raw, kept, 100.0 * (raw - kept) / raw, truth, wrong_scenes, world.scenes().size(), map_before,
              map_after)};
}

// Criterion 10: rare-class oversampling on the four-class histogram.
Outcome oversample_criterion() {
  const auto& cats = taxonomy();
  const ClassHistogram h({{cats[0], 100}, {cats[1], 25}, {cats[2], 11}, {cats[3], 4}});
  std::vector<int> factors;
  for (uint64_t f : {100, 25, 11, 4}) factors.push_back(replication_factor(f, h.t()));
  const std::vector<int> expected{1, 1, 2, 3};
  return {h.t() == 43.75 && factors == expected,
          fmt("t = %.4f (43.75); factors {%d, %d, %d, %d} (expected {1, 1, 2, 3})", h.t(), factors[0], factors[1],
              factors[2], factors[3])};
}

}  // namespace
}  // namespace vpg

int main() {
  using namespace vpg;
  std::unique_ptr<Pipeline> reference;
  std::unique_ptr<Pipeline> noisy;
  // Later criteria rebuild a world when the criterion that owns it failed early.
  auto reference_pipeline = [&]() -> Pipeline& {
    if (!reference) reference = std::make_unique<Pipeline>(WorldConfig{});
    return *reference;
  };
  auto noisy_pipeline = [&]() -> Pipeline& {
    if (!noisy) noisy = std::make_unique<Pipeline>(noisy_reference());
    return *noisy;
  };

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "reference-world retrieval", [&] { return reference_retrieval(reference); }},
      {2, "ANN recall", [&] { return ann_recall_criterion(noisy_pipeline().world); }},
      {3, "noisy-world ES@1", [&] { return noisy_retrieval(noisy_pipeline()); }},
      {4, "reverse pipeline invariants and replay", [&] { return pipeline_invariants(reference_pipeline()); }},
      {5, "feature store", [&] { return store_criterion(reference_pipeline().world); }},
      {6, "forward cache TTL and single-flight", [&] { return ttl_criterion(reference_pipeline()); }},
      {7, "triplet mining", [] { return triplet_criterion(); }},
      {8, "metric micro-cases", [] { return metric_criterion(); }},
      {9, "class-agnostic NMS", [] { return nms_criterion(); }},
      {10, "rare-class oversampling", [] { return oversample_criterion(); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                elapsed(start));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
