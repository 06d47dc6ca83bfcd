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

#include "vpg/eval.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <optional>
#include <tuple>

#include "vpg/embedding_ops.h"
#include "vpg/errors.h"
#include "vpg/scene.h"
#include "vpg/synthetic_world.h"

namespace vpg {

namespace {

bool at_or_above(RelevanceLevel level, RelevanceLevel threshold) {
  return level != RelevanceLevel::kDidNotLoad && level <= threshold;
}

// One prediction after matching, with the category it was scored under.
struct ScoredPrediction {
  double confidence;
  bool true_positive;
};

// Greedy matching within one case, per category.
std::map<Category, std::vector<ScoredPrediction>> match_case(const DetectionEvalCase& c, double iou_threshold) {
  std::vector<size_t> order(c.predictions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& pa = c.predictions[a];
    const auto& pb = c.predictions[b];
    if (pa.confidence != pb.confidence) return pa.confidence > pb.confidence;
    return std::tie(pa.category, pa.box) < std::tie(pb.category, pb.box);
  });
  std::vector<bool> matched(c.ground_truth.size(), false);
  std::map<Category, std::vector<ScoredPrediction>> out;
  for (size_t i : order) {
    const auto& p = c.predictions[i];
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) throw InvalidArgument("confidence outside [0, 1]");
    int best = -1;
    double best_iou = iou_threshold;
    for (size_t g = 0; g < c.ground_truth.size(); ++g) {
      if (matched[g] || c.ground_truth[g].category != p.category) continue;
      const double overlap = iou(p.box, c.ground_truth[g].box);
      if (overlap >= best_iou && (best < 0 || overlap > best_iou)) {
        best = static_cast<int>(g);
        best_iou = overlap;
      }
    }
    if (best >= 0) matched[best] = true;
    out[p.category].push_back({p.confidence, best >= 0});
  }
  return out;
}

struct OperatingPoint {
  double recall;
  double precision;
};

// Precision/recall after each distinct confidence level, descending.
std::vector<OperatingPoint> sweep(std::vector<ScoredPrediction> preds, size_t positives) {
  std::sort(preds.begin(), preds.end(),
            [](const ScoredPrediction& a, const ScoredPrediction& b) { return a.confidence > b.confidence; });
  std::vector<OperatingPoint> points;
  size_t tp = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    tp += preds[i].true_positive ? 1 : 0;
    if (i + 1 < preds.size() && preds[i + 1].confidence == preds[i].confidence) continue;
    points.push_back({positives == 0 ? 0.0 : static_cast<double>(tp) / positives, static_cast<double>(tp) / (i + 1)});
  }
  return points;
}

double all_point_ap(const std::vector<OperatingPoint>& points) {
  // Area under the precision envelope: precision at recall r is the best
  // precision reached at any recall >= r.
  double ap = 0;
  double prev_recall = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    double envelope = 0;
    for (size_t j = i; j < points.size(); ++j) envelope = std::max(envelope, points[j].precision);
    ap += (points[i].recall - prev_recall) * envelope;
    prev_recall = points[i].recall;
  }
  return ap;
}

nlohmann::json precision_json(const PrecisionResult& r) {
  return {{"value", r.precision},
          {"evaluated", r.evaluated},
          {"excluded", r.excluded.size()},
          {"did_not_load_results", r.did_not_load_results}};
}

const std::vector<uint32_t>* scene_products(const WorldTruth& truth, const std::string& hex) {
  auto it = truth.scene_products.find(ImageSignature::from_hex(hex));
  return it == truth.scene_products.end() ? nullptr : &it->second;
}

std::optional<uint32_t> product_of(const WorldTruth& truth, const std::string& hex) {
  auto it = truth.product_of_image.find(ImageSignature::from_hex(hex));
  if (it == truth.product_of_image.end()) return std::nullopt;
  return it->second;
}

// Best rating of `candidate` against any product in `reference`.
RelevanceLevel rate(const WorldTruth& truth, uint32_t candidate, const std::vector<uint32_t>& reference, double tau) {
  RelevanceLevel best = RelevanceLevel::kNotSimilar;
  for (uint32_t r : reference) {
    if (r == candidate) return RelevanceLevel::kExtremelySimilar;
    if (truth.category_of.at(r) != truth.category_of.at(candidate)) continue;
    const double d = euclidean_distance(truth.latent_of.at(r), truth.latent_of.at(candidate));
    best = std::min(best, d <= tau ? RelevanceLevel::kSimilar : RelevanceLevel::kMarginallySimilar);
  }
  return best;
}

}  // namespace

std::string_view relevance_name(RelevanceLevel level) {
  switch (level) {
    case RelevanceLevel::kExtremelySimilar:
      return "extremely_similar";
    case RelevanceLevel::kSimilar:
      return "similar";
    case RelevanceLevel::kMarginallySimilar:
      return "marginally_similar";
    case RelevanceLevel::kNotSimilar:
      return "not_similar";
    case RelevanceLevel::kDidNotLoad:
      break;
  }
  return "did_not_load";
}

RelevanceLevel relevance_from_name(std::string_view name) {
  for (auto level : {RelevanceLevel::kExtremelySimilar, RelevanceLevel::kSimilar, RelevanceLevel::kMarginallySimilar,
                     RelevanceLevel::kNotSimilar, RelevanceLevel::kDidNotLoad}) {
    if (relevance_name(level) == name) return level;
  }
  throw InvalidArgument("unknown relevance level '" + std::string(name) + "'");
}

PrecisionResult precision_at_k(std::span<const RatedQuery> queries, size_t k, RelevanceLevel threshold) {
  if (k == 0) throw InvalidArgument("k must be positive");
  if (threshold == RelevanceLevel::kDidNotLoad) throw InvalidArgument("did_not_load is not a threshold");
  PrecisionResult out;
  double sum = 0;
  for (const auto& q : queries) {
    size_t loaded = 0;
    size_t hits = 0;
    for (auto level : q.ratings) {
      if (level == RelevanceLevel::kDidNotLoad) {
        ++out.did_not_load_results;
        continue;
      }
      if (loaded < k && at_or_above(level, threshold)) ++hits;
      ++loaded;
    }
    if (loaded == 0) {
      out.excluded.push_back(q.query);
      continue;
    }
    sum += static_cast<double>(hits) / static_cast<double>(std::min(k, loaded));
    ++out.evaluated;
  }
  if (out.evaluated == 0) throw EmptyEvaluationError("no query has a loadable result");
  out.precision = sum / static_cast<double>(out.evaluated);
  return out;
}

std::map<Category, double> average_precision(std::span<const DetectionEvalCase> cases, double iou_threshold) {
  std::map<Category, size_t> positives;
  std::map<Category, std::vector<ScoredPrediction>> scored;
  for (const auto& c : cases) {
    for (const auto& g : c.ground_truth) ++positives[g.category];
    for (auto& [category, preds] : match_case(c, iou_threshold)) {
      auto& all = scored[category];
      all.insert(all.end(), preds.begin(), preds.end());
    }
  }
  std::map<Category, double> out;
  for (const auto& [category, n] : positives) out[category] = all_point_ap(sweep(scored[category], n));
  return out;
}

double mean_average_precision(std::span<const DetectionEvalCase> cases, double iou_threshold) {
  const auto per_category = average_precision(cases, iou_threshold);
  if (per_category.empty()) return 0.0;
  double sum = 0;
  for (const auto& [category, ap] : per_category) sum += ap;
  return sum / static_cast<double>(per_category.size());
}

double recall_at_precision(std::span<const DetectionEvalCase> cases, double precision_floor, double iou_threshold) {
  size_t positives = 0;
  std::vector<ScoredPrediction> all;
  for (const auto& c : cases) {
    positives += c.ground_truth.size();
    for (auto& [category, preds] : match_case(c, iou_threshold)) all.insert(all.end(), preds.begin(), preds.end());
  }
  double best = 0;
  for (const auto& p : sweep(std::move(all), positives)) {
    if (p.precision >= precision_floor) best = std::max(best, p.recall);
  }
  return best;
}

TapRate module_tap_rate(int64_t closeups, int64_t impressions) {
  if (impressions == 0) throw DivisionByZero("module tap rate with zero impressions");
  if (closeups < 0 || impressions < 0) throw InvalidArgument("tap rate counts must be non-negative");
  const double rate = static_cast<double>(closeups) / static_cast<double>(impressions);
  return {rate, rate > 1.0};
}

std::vector<RatedQuery> rate_predictions(std::span<const nlohmann::json> predictions, const WorldTruth& truth,
                                         double tau) {
  std::vector<RatedQuery> out;
  for (const auto& line : predictions) {
    RatedQuery q;
    if (line.contains("scenes")) {
      q.query = line.at("product").get<std::string>();
      const auto product = product_of(truth, q.query);
      if (!product) throw UnknownEntityError("query product " + q.query + " is not in the truth file");
      const std::vector<uint32_t> reference{*product};
      for (const auto& s : line.at("scenes")) {
        const auto* contents = scene_products(truth, s.at("scene").get<std::string>());
        if (!contents) {
          q.ratings.push_back(RelevanceLevel::kDidNotLoad);
          continue;
        }
        RelevanceLevel best = RelevanceLevel::kNotSimilar;
        for (uint32_t p : *contents) best = std::min(best, rate(truth, p, reference, tau));
        q.ratings.push_back(best);
      }
    } else if (line.contains("products")) {
      q.query = line.at("scene").get<std::string>();
      const auto* contents = scene_products(truth, q.query);
      if (!contents) throw UnknownEntityError("query scene " + q.query + " is not in the truth file");
      for (const auto& p : line.at("products")) {
        const auto product = product_of(truth, p.at("product").get<std::string>());
        q.ratings.push_back(product ? rate(truth, *product, *contents, tau) : RelevanceLevel::kDidNotLoad);
      }
    } else {
      throw InvalidArgument("prediction line has neither 'scenes' nor 'products'");
    }
    out.push_back(std::move(q));
  }
  return out;
}

nlohmann::json retrieval_report(std::span<const RatedQuery> rated, const std::vector<size_t>& ks) {
  nlohmann::json report = {{"queries", rated.size()}};
  for (size_t k : ks) {
    report["es@" + std::to_string(k)] = precision_json(precision_at_k(rated, k, RelevanceLevel::kExtremelySimilar));
    report["similar@" + std::to_string(k)] = precision_json(precision_at_k(rated, k, RelevanceLevel::kSimilar));
  }
  return report;
}

std::vector<DetectionEvalCase> read_detection_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<DetectionEvalCase> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DetectionEvalCase c;
      for (const auto& g : j.at("ground_truth")) {
        c.ground_truth.push_back({box_from_json(g.at("box")), Category::from_name(g.at("category").get<std::string>())});
      }
      for (const auto& p : j.at("predictions")) {
        const double conf = p.at("confidence").get<double>();
        if (!(conf >= 0.0 && conf <= 1.0)) throw InvalidArgument("confidence outside [0, 1]");
        c.predictions.push_back(
            {box_from_json(p.at("box")), Category::from_name(p.at("category").get<std::string>()), conf});
      }
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

nlohmann::json detection_case_to_json(const DetectionEvalCase& c) {
  nlohmann::json gt = nlohmann::json::array();
  for (const auto& g : c.ground_truth) gt.push_back({{"box", box_to_json(g.box)}, {"category", g.category.name()}});
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : c.predictions) {
    preds.push_back({{"box", box_to_json(p.box)}, {"category", p.category.name()}, {"confidence", p.confidence}});
  }
  return {{"ground_truth", gt}, {"predictions", preds}};
}

nlohmann::json detection_report(std::span<const DetectionEvalCase> cases, double iou_threshold,
                                double precision_floor) {
  nlohmann::json per_category = nlohmann::json::object();
  for (const auto& [category, ap] : average_precision(cases, iou_threshold)) per_category[category.name()] = ap;
  return {{"cases", cases.size()},
          {"iou_threshold", iou_threshold},
          {"map", mean_average_precision(cases, iou_threshold)},
          {"recall_at_precision", recall_at_precision(cases, precision_floor, iou_threshold)},
          {"precision_floor", precision_floor},
          {"ap", per_category}};
}

}  // namespace vpg
