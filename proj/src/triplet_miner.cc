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

#include "vpg/triplet_miner.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "vpg/embedding_ops.h"
#include "vpg/errors.h"
#include "vpg/random.h"
#include "vpg/scene.h"
#include "vpg/synthetic_world.h"
#include "vpg/visual_index.h"

namespace vpg {

namespace {

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

template <typename T, typename Dump>
void write_jsonl(const std::filesystem::path& path, std::span<const T> items, Dump dump) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  for (const auto& item : items) out << dump(item).dump() << '\n';
  if (!out) throw StoreError("write failed for " + path.string());
}

nlohmann::json query_to_json(const TripletQuery& q) {
  return {{"signature", q.signature.to_hex()}, {"box", box_to_json(q.box)}, {"category", q.category.name()}};
}

size_t uniform_index(Rng& rng, size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); }

}  // namespace

Day parse_day(std::string_view iso) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  const std::string s(iso);
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw InvalidArgument("day must be YYYY-MM-DD, got '" + s + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw InvalidArgument("no such date '" + s + "'");
  return static_cast<Day>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

std::string format_day(Day day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view label_name(TripletLabel label) {
  switch (label) {
    case TripletLabel::kMatch:
      return "match";
    case TripletLabel::kNoMatch:
      return "no_match";
    case TripletLabel::kUnlabeled:
      break;
  }
  return "unlabeled";
}

TripletLabel label_from_name(std::string_view name) {
  if (name == "match") return TripletLabel::kMatch;
  if (name == "no_match") return TripletLabel::kNoMatch;
  if (name == "unlabeled") return TripletLabel::kUnlabeled;
  throw InvalidArgument("unknown label '" + std::string(name) + "'");
}

std::string_view kind_name(TripletKind kind) {
  switch (kind) {
    case TripletKind::kHard:
      return "hard";
    case TripletKind::kEasy:
      return "easy";
    case TripletKind::kRandom:
      return "random";
    case TripletKind::kCandidate:
      break;
  }
  return "candidate";
}

TripletKind kind_from_name(std::string_view name) {
  if (name == "hard") return TripletKind::kHard;
  if (name == "easy") return TripletKind::kEasy;
  if (name == "random") return TripletKind::kRandom;
  if (name == "candidate") return TripletKind::kCandidate;
  throw InvalidArgument("unknown triplet kind '" + std::string(name) + "'");
}

std::vector<TripletRecord> mine_candidate_triplets(std::span<const EngagementLog> logs,
                                                   const MiningOptions& options) {
  if (options.window_days <= 0) throw InvalidArgument("window_days must be positive");
  if (logs.empty()) return {};
  Day as_of = logs.front().day;
  if (options.as_of) {
    as_of = *options.as_of;
  } else {
    for (const auto& row : logs) as_of = std::max(as_of, row.day);
  }
  const Day first = as_of - options.window_days + 1;

  std::map<TripletQuery, std::map<ImageSignature, int64_t>> engagement;
  for (const auto& row : logs) {
    if (row.day < first || row.day > as_of) continue;
    engagement[row.query][row.candidate] += row.closeup_count;
  }

  std::vector<TripletRecord> out;
  for (const auto& [query, candidates] : engagement) {
    if (candidates.size() < 2) continue;
    for (const auto& [pos, e_pos] : candidates) {
      for (const auto& [neg, e_neg] : candidates) {
        if (e_pos <= e_neg) continue;
        TripletRecord t;
        t.query = query;
        t.positive = pos;
        t.negative = neg;
        t.engagement_pos = e_pos;
        t.engagement_neg = e_neg;
        out.push_back(t);
      }
    }
  }
  return out;
}

TripletRecord hardness_check(TripletRecord t, const TripletEmbedder& embedder, HardnessRule rule) {
  const Embedding q = embedder(t.query.signature, t.query.box);
  const Embedding p = embedder(t.positive, std::nullopt);
  const Embedding n = embedder(t.negative, std::nullopt);
  t.d_pos = euclidean_distance(q, p);
  t.d_neg = euclidean_distance(q, n);
  const bool hard = rule == HardnessRule::kProse ? t.d_pos > t.d_neg : t.d_pos < t.d_neg;
  t.kind = hard ? TripletKind::kHard : TripletKind::kEasy;
  return t;
}

std::vector<TripletRecord> label_triplets(std::span<const TripletRecord> hard, const LabelOracle& oracle,
                                          LabelingStats* stats) {
  LabelingStats local;
  std::vector<TripletRecord> out;
  for (const auto& input : hard) {
    if (input.kind != TripletKind::kHard) throw InvalidArgument("label_triplets expects hard triplets");
    TripletRecord t = input;
    try {
      t.label_pos = oracle(t.query, t.positive);
      t.label_neg = oracle(t.query, t.negative);
    } catch (const LabelingError&) {
      ++local.failures;
      continue;
    }
    ++local.labeled;
    if (t.label_pos == TripletLabel::kMatch && t.label_neg == TripletLabel::kNoMatch) {
      out.push_back(t);
      ++local.kept;
    }
  }
  if (stats) *stats = local;
  return out;
}

RandomPool build_random_pool(std::span<const EngagementLog> logs, const LabelOracle& oracle,
                             std::vector<ImageSignature> candidates) {
  std::set<std::pair<TripletQuery, ImageSignature>> pairs;
  for (const auto& row : logs) pairs.emplace(row.query, row.candidate);
  RandomPool pool;
  for (const auto& [query, candidate] : pairs) {
    try {
      if (oracle(query, candidate) == TripletLabel::kMatch) pool.matches.emplace_back(query, candidate);
    } catch (const LabelingError&) {
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  pool.candidates = std::move(candidates);
  return pool;
}

std::vector<TripletRecord> assemble_dataset(std::span<const TripletRecord> hard, const RandomPool& pool,
                                            const AssemblyOptions& options, const LabelOracle& oracle,
                                            const TripletEmbedder& embedder) {
  if (!(options.hard_fraction >= 0.0 && options.hard_fraction <= 1.0)) {
    throw InvalidArgument("hard_fraction must lie in [0, 1]");
  }
  const auto n_hard = static_cast<size_t>(std::llround(options.hard_fraction * options.target_size));
  const size_t n_random = options.target_size - n_hard;
  if (hard.size() < n_hard) {
    throw InsufficientTriplets("need " + std::to_string(n_hard) + " hard triplets, have " +
                               std::to_string(hard.size()));
  }
  if (n_random > 0 && (pool.matches.empty() || pool.candidates.empty())) {
    throw InsufficientTriplets("random triplets need known matches and candidate images");
  }

  Rng rng(derive_seed(options.seed, "triplets/assemble"));
  std::vector<size_t> order(hard.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Partial Fisher-Yates: the first n_hard slots are a uniform sample.
  for (size_t i = 0; i < n_hard; ++i) std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);

  std::vector<TripletRecord> out;
  out.reserve(options.target_size);
  for (size_t i = 0; i < n_hard; ++i) out.push_back(hard[order[i]]);

  for (size_t i = 0; i < n_random; ++i) {
    const auto& [query, positive] = pool.matches[uniform_index(rng, pool.matches.size())];
    std::optional<ImageSignature> negative;
    for (size_t draw = 0; draw < options.max_negative_draws && !negative; ++draw) {
      const ImageSignature& c = pool.candidates[uniform_index(rng, pool.candidates.size())];
      if (c == positive) continue;
      try {
        if (oracle(query, c) == TripletLabel::kNoMatch) negative = c;
      } catch (const LabelingError&) {
      }
    }
    if (!negative) throw InsufficientTriplets("no non-matching negative found for a random triplet");
    TripletRecord t;
    t.query = query;
    t.positive = positive;
    t.negative = *negative;
    t.label_pos = TripletLabel::kMatch;
    t.label_neg = TripletLabel::kNoMatch;
    t.kind = TripletKind::kRandom;
    if (embedder) {
      t = hardness_check(t, embedder);
      t.kind = TripletKind::kRandom;
    }
    out.push_back(t);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

TripletEmbedder store_embedder(FeatureStore& store, Extractor extractor) {
  return [&store, extractor = std::move(extractor)](const ImageSignature& sig,
                                                     const std::optional<BoundingBox>& box) -> Embedding {
    SceneEntry entry;
    try {
      entry = store.get_or_extract(sig, extractor).entry;
    } catch (const ExtractionError& e) {
      throw UnknownEntityError("no features for " + sig.to_hex() + ": " + e.what());
    }
    if (!box) return entry.full_embedding;
    const DetectedObject* best = nullptr;
    double best_iou = 0.5;
    for (const auto& o : entry.objects) {
      const double overlap = iou(o.box, *box);
      if (overlap >= best_iou) {
        best = &o;
        best_iou = overlap;
      }
    }
    if (!best) throw UnknownEntityError("no stored object matches the query box in " + sig.to_hex());
    return best->embedding;
  };
}

LabelOracle world_oracle(const SyntheticWorld& world) {
  return [&world](const TripletQuery& q, const ImageSignature& candidate) {
    const auto truth = world.product_at(q.signature, q.box);
    if (!truth) throw LabelingError("query box is not a known object in " + q.signature.to_hex());
    const ProductTruth* product = world.find_product(candidate);
    if (!product) throw LabelingError("candidate " + candidate.to_hex() + " is not a catalog image");
    return product->id == *truth ? TripletLabel::kMatch : TripletLabel::kNoMatch;
  };
}

std::vector<EngagementLog> synthesize_engagement_logs(const SyntheticWorld& world, const VisualIndex& index,
                                                      const EngagementLogConfig& config) {
  if (world.scenes().empty() || index.product_count() == 0) return {};
  if (config.days <= 0) throw InvalidArgument("days must be positive");
  Rng rng(derive_seed(world.config().seed, "engagement", {config.seed}));
  std::set<TripletQuery> used;
  std::vector<EngagementLog> rows;
  const size_t max_attempts = config.queries * 20 + 100;
  for (size_t attempt = 0; attempt < max_attempts && used.size() < config.queries; ++attempt) {
    const SceneTruth& scene = world.scenes()[uniform_index(rng, world.scenes().size())];
    if (scene.objects.empty()) continue;
    const ObjectTruth& object = scene.objects[uniform_index(rng, scene.objects.size())];
    const TripletQuery query{scene.signature, object.box, object.category};
    if (!used.insert(query).second) continue;

    const auto neighbors = index.products().search(world.embed(scene.signature, object.box), config.candidates);
    for (size_t slot = 0; slot < neighbors.size(); ++slot) {
      const ProductEntry& product = index.product(neighbors[slot].id);
      const ProductTruth* truth = world.find_product(product.signature);
      const bool match = truth && truth->id == object.product_id;
      std::poisson_distribution<int64_t> closeups(match ? config.match_closeups : config.other_closeups);
      std::set<Day> days;
      const int n_days = 1 + static_cast<int>(uniform_index(rng, 3));
      for (int d = 0; d < n_days; ++d) {
        const bool stale = std::uniform_real_distribution<double>(0, 1)(rng) < config.stale_fraction;
        const Day day = stale ? config.first_day - 1 - static_cast<Day>(uniform_index(rng, 30))
                              : config.first_day + static_cast<Day>(uniform_index(rng, config.days));
        if (!days.insert(day).second) continue;
        rows.push_back({query, product.signature, static_cast<int32_t>(slot), closeups(rng), day});
      }
    }
  }
  return rows;
}

nlohmann::json engagement_to_json(const EngagementLog& row) {
  return {{"query_signature", row.query.signature.to_hex()},
          {"query_box", box_to_json(row.query.box)},
          {"query_category", row.query.category.name()},
          {"candidate_signature", row.candidate.to_hex()},
          {"candidate_slot", row.candidate_slot},
          {"closeup_count", row.closeup_count},
          {"day", format_day(row.day)}};
}

EngagementLog engagement_from_json(const nlohmann::json& j) {
  EngagementLog row;
  row.query.signature = ImageSignature::from_hex(j.at("query_signature").get<std::string>());
  row.query.box = box_from_json(j.at("query_box"));
  row.query.category = Category::from_name(j.at("query_category").get<std::string>());
  row.candidate = ImageSignature::from_hex(j.at("candidate_signature").get<std::string>());
  row.candidate_slot = j.at("candidate_slot").get<int32_t>();
  row.closeup_count = j.at("closeup_count").get<int64_t>();
  row.day = parse_day(j.at("day").get<std::string>());
  if (row.candidate_slot < 0) throw InvalidArgument("candidate_slot must be >= 0");
  if (row.closeup_count < 0) throw InvalidArgument("closeup_count must be >= 0");
  return row;
}

nlohmann::json triplet_to_json(const TripletRecord& t) {
  return {{"query", query_to_json(t.query)},
          {"positive", t.positive.to_hex()},
          {"negative", t.negative.to_hex()},
          {"engagement_pos", t.engagement_pos},
          {"engagement_neg", t.engagement_neg},
          {"d_pos", t.d_pos},
          {"d_neg", t.d_neg},
          {"label_pos", label_name(t.label_pos)},
          {"label_neg", label_name(t.label_neg)},
          {"kind", kind_name(t.kind)}};
}

TripletRecord triplet_from_json(const nlohmann::json& j) {
  TripletRecord t;
  const auto& q = j.at("query");
  t.query.signature = ImageSignature::from_hex(q.at("signature").get<std::string>());
  t.query.box = box_from_json(q.at("box"));
  t.query.category = Category::from_name(q.at("category").get<std::string>());
  t.positive = ImageSignature::from_hex(j.at("positive").get<std::string>());
  t.negative = ImageSignature::from_hex(j.at("negative").get<std::string>());
  t.engagement_pos = j.at("engagement_pos").get<int64_t>();
  t.engagement_neg = j.at("engagement_neg").get<int64_t>();
  t.d_pos = j.at("d_pos").get<double>();
  t.d_neg = j.at("d_neg").get<double>();
  t.label_pos = label_from_name(j.at("label_pos").get<std::string>());
  t.label_neg = label_from_name(j.at("label_neg").get<std::string>());
  t.kind = kind_from_name(j.at("kind").get<std::string>());
  return t;
}

std::vector<EngagementLog> read_engagement_jsonl(const std::filesystem::path& path) {
  return read_jsonl<EngagementLog>(path, engagement_from_json);
}

void write_engagement_jsonl(const std::filesystem::path& path, std::span<const EngagementLog> rows) {
  write_jsonl(path, rows, engagement_to_json);
}

std::vector<TripletRecord> read_triplets_jsonl(const std::filesystem::path& path) {
  return read_jsonl<TripletRecord>(path, triplet_from_json);
}

void write_triplets_jsonl(const std::filesystem::path& path, std::span<const TripletRecord> triplets) {
  write_jsonl(path, triplets, triplet_to_json);
}

}  // namespace vpg
