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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vpg/feature_store.h"
#include "vpg/types.h"

namespace vpg {

class SyntheticWorld;
class VisualIndex;

// Calendar day as a count of days since 1970-01-01.
using Day = int32_t;

Day parse_day(std::string_view iso);  // "YYYY-MM-DD"; InvalidArgument otherwise
std::string format_day(Day day);

// The object a user searched from: an image plus the tapped box.
struct TripletQuery {
  ImageSignature signature;
  BoundingBox box;
  Category category;

  friend bool operator==(const TripletQuery&, const TripletQuery&) = default;
  friend auto operator<=>(const TripletQuery&, const TripletQuery&) = default;
};

// One row per (query, candidate, day).
struct EngagementLog {
  TripletQuery query;
  ImageSignature candidate;
  int32_t candidate_slot = 0;
  int64_t closeup_count = 0;
  Day day = 0;

  friend bool operator==(const EngagementLog&, const EngagementLog&) = default;
};

enum class TripletLabel : uint8_t { kUnlabeled, kMatch, kNoMatch };
enum class TripletKind : uint8_t { kCandidate, kHard, kEasy, kRandom };

std::string_view label_name(TripletLabel label);
TripletLabel label_from_name(std::string_view name);
std::string_view kind_name(TripletKind kind);
TripletKind kind_from_name(std::string_view name);

struct TripletRecord {
  TripletQuery query;
  ImageSignature positive;
  ImageSignature negative;
  int64_t engagement_pos = 0;
  int64_t engagement_neg = 0;
  double d_pos = 0;
  double d_neg = 0;
  TripletLabel label_pos = TripletLabel::kUnlabeled;
  TripletLabel label_neg = TripletLabel::kUnlabeled;
  TripletKind kind = TripletKind::kCandidate;

  friend bool operator==(const TripletRecord&, const TripletRecord&) = default;
};

struct MiningOptions {
  int32_t window_days = 30;
  // Last day of the window, inclusive; defaults to the latest day in the log.
  std::optional<Day> as_of;
};

// Emits (q, c_n, c_0) for every ordered candidate pair of a query with
// engagement(c_n) > engagement(c_0), where engagement is the closeup sum over
// the window. Output is sorted, so any permutation of the log gives the same
// result.
std::vector<TripletRecord> mine_candidate_triplets(std::span<const EngagementLog> logs,
                                                   const MiningOptions& options = {});

// Embeds a query crop (box set) or a whole image (box empty).
using TripletEmbedder = std::function<Embedding(const ImageSignature&, const std::optional<BoundingBox>&)>;

// kProse: hard iff d_pos > d_neg, the model ranks the negative closer.
// kLiteral: hard iff d_pos < d_neg, the comparator as written in the pseudocode.
enum class HardnessRule : uint8_t { kProse, kLiteral };

TripletRecord hardness_check(TripletRecord t, const TripletEmbedder& embedder,
                             HardnessRule rule = HardnessRule::kProse);

// Whether `candidate` depicts the same item as the query object.
using LabelOracle = std::function<TripletLabel(const TripletQuery&, const ImageSignature& candidate)>;

struct LabelingStats {
  size_t labeled = 0;
  size_t kept = 0;
  size_t failures = 0;  // oracle threw LabelingError; triplet skipped
};

// Keeps hard triplets labeled (match, no_match). Non-hard input is rejected
// with InvalidArgument.
std::vector<TripletRecord> label_triplets(std::span<const TripletRecord> hard, const LabelOracle& oracle,
                                          LabelingStats* stats = nullptr);

// Material for random triplets: known (query, match) pairs and the images
// negatives are drawn from.
struct RandomPool {
  std::vector<std::pair<TripletQuery, ImageSignature>> matches;
  std::vector<ImageSignature> candidates;
};

// Matches are the logged (query, candidate) pairs the oracle labels match.
RandomPool build_random_pool(std::span<const EngagementLog> logs, const LabelOracle& oracle,
                             std::vector<ImageSignature> candidates);

struct AssemblyOptions {
  size_t target_size = 0;
  double hard_fraction = 0.5;
  uint64_t seed = 0;
  size_t max_negative_draws = 1000;
};

// round(hard_fraction * target_size) hard triplets sampled without replacement,
// the rest random: a uniformly drawn known match paired with a uniformly drawn
// non-match. Shuffled under the seed. InsufficientTriplets when either supply
// falls short. The embedder may be empty, leaving random distances at 0.
std::vector<TripletRecord> assemble_dataset(std::span<const TripletRecord> hard, const RandomPool& pool,
                                            const AssemblyOptions& options, const LabelOracle& oracle,
                                            const TripletEmbedder& embedder = {});

// Crop and image embeddings through the store, extracting on a miss. A query
// box resolves to the stored object with the highest IoU (at least 0.5).
TripletEmbedder store_embedder(FeatureStore& store, Extractor extractor);

// Ground-truth product identity from the synthetic world.
LabelOracle world_oracle(const SyntheticWorld& world);

struct EngagementLogConfig {
  size_t queries = 50;
  size_t candidates = 12;  // products shown per query
  Day first_day = 20000;
  int32_t days = 30;
  double match_closeups = 4.0;  // Poisson mean per (candidate, day) for the true product
  double other_closeups = 1.0;
  // Share of rows dated before first_day, outside a window ending at the last day.
  double stale_fraction = 0.1;
  uint64_t seed = 7;
};

// Simulated closeup logs: each query is a detected object from a world scene,
// its candidates the nearest products in the index.
std::vector<EngagementLog> synthesize_engagement_logs(const SyntheticWorld& world, const VisualIndex& index,
                                                      const EngagementLogConfig& config);

nlohmann::json engagement_to_json(const EngagementLog& row);
EngagementLog engagement_from_json(const nlohmann::json& j);
nlohmann::json triplet_to_json(const TripletRecord& t);
TripletRecord triplet_from_json(const nlohmann::json& j);

std::vector<EngagementLog> read_engagement_jsonl(const std::filesystem::path& path);
void write_engagement_jsonl(const std::filesystem::path& path, std::span<const EngagementLog> rows);
std::vector<TripletRecord> read_triplets_jsonl(const std::filesystem::path& path);
void write_triplets_jsonl(const std::filesystem::path& path, std::span<const TripletRecord> triplets);

}  // namespace vpg
