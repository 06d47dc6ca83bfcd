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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vpg/ann_index.h"
#include "vpg/types.h"

namespace vpg {

struct WorldTruth;

// Ordered best to worst; kDidNotLoad means the result could not be rated.
enum class RelevanceLevel : uint8_t {
  kExtremelySimilar = 0,
  kSimilar = 1,
  kMarginallySimilar = 2,
  kNotSimilar = 3,
  kDidNotLoad = 4,
};

std::string_view relevance_name(RelevanceLevel level);
RelevanceLevel relevance_from_name(std::string_view name);

// Ranked ratings for one query, best result first.
struct RatedQuery {
  std::string query;
  std::vector<RelevanceLevel> ratings;
};

struct PrecisionResult {
  double precision = 0;
  size_t evaluated = 0;
  // Queries with no loadable result; excluded from the mean.
  std::vector<std::string> excluded;
  size_t did_not_load_results = 0;
};

// Mean over queries of (top-k results at or above `threshold`) / min(k, results).
// kDidNotLoad results are removed before ranking. EmptyEvaluationError when no
// query has a loadable result.
PrecisionResult precision_at_k(std::span<const RatedQuery> queries, size_t k, RelevanceLevel threshold);

struct GroundTruthBox {
  BoundingBox box;
  Category category;
};

struct PredictedBox {
  BoundingBox box;
  Category category;
  double confidence = 0;
};

struct DetectionEvalCase {
  std::vector<GroundTruthBox> ground_truth;
  std::vector<PredictedBox> predictions;
};

// Per-category average precision with all-point interpolation. Predictions are
// matched greedily by descending confidence to the unmatched ground truth box
// of the same category with the highest IoU >= iou_threshold; later matches to
// an already matched box are false positives. Predictions of equal confidence
// form one operating point. Only categories present in the ground truth appear.
std::map<Category, double> average_precision(std::span<const DetectionEvalCase> cases, double iou_threshold = 0.5);

// Mean of average_precision over ground-truth categories; 0 with no ground truth.
double mean_average_precision(std::span<const DetectionEvalCase> cases, double iou_threshold = 0.5);

// Maximum recall over confidence thresholds whose precision is >= floor; 0 when
// no operating point qualifies. Matching as in average_precision.
double recall_at_precision(std::span<const DetectionEvalCase> cases, double precision_floor = 0.90,
                           double iou_threshold = 0.5);

struct TapRate {
  double rate = 0;
  bool anomalous = false;  // more closeups than impressions
};

// closeups / impressions; DivisionByZero when impressions is 0.
TapRate module_tap_rate(int64_t closeups, int64_t impressions);

struct RetrievalEvalOptions {
  std::vector<size_t> ks{1, 5};
  // Latent distance under which a same-category item counts as similar.
  double tau = 1.0;
};

// Rates reverse lines ({"product", "scenes"}) and forward lines ({"scene",
// "products"}) against world truth. Extremely similar: the result holds the
// query's product (reverse) or is one of the scene's products (forward).
// Similar: same category within tau in latent space. Marginal: same category.
// Results unknown to the truth are did_not_load.
std::vector<RatedQuery> rate_predictions(std::span<const nlohmann::json> predictions, const WorldTruth& truth,
                                         double tau);

// ES@k and Similar@k for every k, with evaluated and excluded query counts.
nlohmann::json retrieval_report(std::span<const RatedQuery> rated, const std::vector<size_t>& ks);

// Reads detection cases, one JSON object per line:
// {"ground_truth": [{"box": ..., "category": ...}], "predictions": [{..., "confidence": c}]}.
std::vector<DetectionEvalCase> read_detection_cases(const std::filesystem::path& path);
nlohmann::json detection_case_to_json(const DetectionEvalCase& c);
nlohmann::json detection_report(std::span<const DetectionEvalCase> cases, double iou_threshold = 0.5,
                                double precision_floor = 0.90);

}  // namespace vpg
