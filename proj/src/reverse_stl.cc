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

#include "vpg/reverse_stl.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "vpg/errors.h"
#include "vpg/oversample.h"

namespace vpg {

nlohmann::json RelevanceCalibration::to_json() const {
  return {{"threshold", threshold}, {"calibration_size", calibration_size}, {"percentile", percentile}};
}

RelevanceCalibration RelevanceCalibration::from_json(const nlohmann::json& j) {
  RelevanceCalibration c;
  c.threshold = j.at("threshold").get<double>();
  c.calibration_size = j.at("calibration_size").get<size_t>();
  c.percentile = j.at("percentile").get<double>();
  if (!std::isfinite(c.threshold)) throw FormatError("calibration threshold is not finite");
  return c;
}

void RelevanceCalibration::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

RelevanceCalibration RelevanceCalibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 1, e.what());
  }
}

ReverseConfig ReverseConfig::read(ConfigReader& r, const std::string& p) {
  ReverseConfig c;
  c.k_raw = static_cast<size_t>(r.get_int(p + "retrieval.k_raw", static_cast<int64_t>(c.k_raw), 1, 100000));
  c.percentile = r.get_double(p + "relevance.percentile", c.percentile, 0.0, 1.0);
  c.calibration_size = static_cast<size_t>(r.get_int(p + "relevance.calibration_size", static_cast<int64_t>(c.calibration_size),
                                                     static_cast<int64_t>(kMinCalibrationQueries), 10'000'000));
  c.calibration_top = static_cast<size_t>(r.get_int(p + "relevance.calibration_top", static_cast<int64_t>(c.calibration_top), 1, 1000));
  c.hamming_max = static_cast<int>(r.get_int(p + "dedup.hamming_max", c.hamming_max, 0, 64));
  c.lambda = r.get_double(p + "rerank.lambda", c.lambda, 0.0, 100.0);
  c.n_out = static_cast<size_t>(r.get_int(p + "rerank.n_out", static_cast<int64_t>(c.n_out), 1, 10000));
  return c;
}

std::vector<SceneCandidate> relevance_filter(std::span<const SceneCandidate> cands, const RelevanceCalibration& cal) {
  std::vector<SceneCandidate> out;
  for (const auto& c : cands) {
    if (c.score >= cal.threshold) out.push_back(c);
  }
  return out;
}

std::vector<SceneCandidate> dedup(std::span<const SceneCandidate> cands, int hamming_max) {
  std::vector<SceneCandidate> kept;
  std::unordered_set<ImageSignature> seen;
  for (const auto& c : cands) {
    if (seen.count(c.scene)) continue;
    bool near = false;
    for (const auto& k : kept) {
      if (hamming_distance(c.near_dup, k.near_dup) <= hamming_max) {
        near = true;
        break;
      }
    }
    if (near) continue;
    seen.insert(c.scene);
    kept.push_back(c);
  }
  return kept;
}

std::vector<SceneCandidate> rerank(std::span<const SceneCandidate> cands, size_t n_out, double lambda) {
  std::vector<SceneCandidate> out;
  if (cands.empty() || n_out == 0) return out;
  out.push_back(cands[0]);
  std::vector<size_t> rest;
  for (size_t i = 1; i < cands.size(); ++i) rest.push_back(i);
  // max_sim[i]: largest similarity of candidate i to anything picked so far.
  std::vector<double> max_sim(cands.size(), -std::numeric_limits<double>::infinity());
  auto update = [&](const SceneCandidate& picked) {
    for (size_t i : rest) {
      const double sim = -static_cast<double>(euclidean_distance(cands[i].scene_embedding, picked.scene_embedding));
      max_sim[i] = std::max(max_sim[i], sim);
    }
  };
  update(cands[0]);
  while (out.size() < n_out && !rest.empty()) {
    size_t best_pos = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t pos = 0; pos < rest.size(); ++pos) {
      const size_t i = rest[pos];
      const double mmr = lambda == 0.0 ? cands[i].score : cands[i].score - lambda * max_sim[i];
      if (mmr > best) {
        best = mmr;
        best_pos = pos;
      }
    }
    const size_t chosen = rest[best_pos];
    rest.erase(rest.begin() + static_cast<ptrdiff_t>(best_pos));
    out.push_back(cands[chosen]);
    update(cands[chosen]);
  }
  return out;
}

RelevanceCalibration calibrate_from_scores(std::span<const std::vector<float>> per_query, double percentile,
                                           size_t top) {
  if (per_query.size() < kMinCalibrationQueries) {
    throw InsufficientCalibrationData("calibration needs at least " + std::to_string(kMinCalibrationQueries) +
                                      " queries, got " + std::to_string(per_query.size()));
  }
  if (!(percentile >= 0.0 && percentile <= 1.0)) throw InvalidArgument("percentile must lie in [0, 1]");
  std::vector<double> pool;
  for (const auto& scores : per_query) {
    for (size_t i = 0; i < std::min(top, scores.size()); ++i) pool.push_back(scores[i]);
  }
  if (pool.empty()) throw InsufficientCalibrationData("calibration queries returned no candidates");
  RelevanceCalibration cal;
  cal.threshold = vpg::percentile(std::move(pool), percentile);
  cal.calibration_size = per_query.size();
  cal.percentile = percentile;
  return cal;
}

nlohmann::json ReverseResult::to_json() const {
  nlohmann::json scenes_json = nlohmann::json::array();
  for (const auto& c : scenes) {
    scenes_json.push_back({{"scene", c.scene.to_hex()},
                           {"score", c.score},
                           {"object", {{"ordinal", c.best_object.ordinal},
                                       {"box", box_to_json(c.best_object.box)},
                                       {"category", c.best_object.category.name()},
                                       {"confidence", c.best_object.confidence}}}});
  }
  return {{"product", product.to_hex()},
          {"scenes", scenes_json},
          {"trace",
           {{"retrieved", trace.retrieved},
            {"after_relevance", trace.after_relevance},
            {"after_dedup", trace.after_dedup},
            {"returned", trace.returned}}}};
}

ReverseStl::ReverseStl(const VisualIndex& index, FeatureStore& store, Extractor extractor, ReverseConfig config)
    : index_(index), store_(store), extractor_(std::move(extractor)), config_(config) {}

Embedding ReverseStl::product_embedding(const ImageSignature& product, bool* hit) const {
  try {
    auto r = store_.get_or_extract(product, extractor_);
    if (hit) *hit = r.hit;
    return std::move(r.entry.full_embedding);
  } catch (const ExtractionError& e) {
    throw UnknownEntityError("no embedding for product " + product.to_hex() + ": " + e.what());
  }
}

std::vector<SceneCandidate> ReverseStl::retrieve_scenes(const ImageSignature& product, size_t k_raw) const {
  return search_scenes(product_embedding(product, nullptr), k_raw);
}

std::vector<SceneCandidate> ReverseStl::search_scenes(const Embedding& q, size_t k_raw) const {
  auto neighbors = index_.objects().search(q.values(), k_raw);
  std::vector<SceneCandidate> out;
  std::unordered_set<ImageSignature> seen;
  for (const auto& n : neighbors) {
    const ObjectIndexEntry& o = index_.object_meta(n.id);
    // Neighbors arrive by ascending distance, so a scene's first object is its best.
    if (!seen.insert(o.parent).second) continue;
    const SceneInfo* info = index_.scene(o.parent);
    if (!info) throw FormatError("object references unknown scene " + o.parent.to_hex());
    out.push_back(SceneCandidate{o.parent, o, 0.0f - n.distance, info->near_dup, info->full_embedding});
  }
  std::stable_sort(out.begin(), out.end(), [](const SceneCandidate& a, const SceneCandidate& b) {
    return a.score != b.score ? a.score > b.score : a.scene < b.scene;
  });
  return out;
}

RelevanceCalibration ReverseStl::calibrate(std::span<const ImageSignature> queries, double percentile) const {
  if (queries.size() < kMinCalibrationQueries) {
    throw InsufficientCalibrationData("calibration needs at least " + std::to_string(kMinCalibrationQueries) +
                                      " queries, got " + std::to_string(queries.size()));
  }
  std::vector<std::vector<float>> per_query;
  per_query.reserve(queries.size());
  for (const auto& q : queries) {
    std::vector<float> scores;
    for (const auto& c : retrieve_scenes(q)) scores.push_back(c.score);
    per_query.push_back(std::move(scores));
  }
  return calibrate_from_scores(per_query, percentile, config_.calibration_top);
}

ReverseResult ReverseStl::query(const ImageSignature& product, const RelevanceCalibration& cal) const {
  ReverseResult r;
  r.product = product;
  auto retrieved = search_scenes(product_embedding(product, &r.store_hit), config_.k_raw);
  r.trace.retrieved = retrieved.size();
  auto relevant = relevance_filter(retrieved, cal);
  r.trace.after_relevance = relevant.size();
  auto unique = dedup(relevant, config_.hamming_max);
  r.trace.after_dedup = unique.size();
  r.scenes = rerank(unique, config_.n_out, config_.lambda);
  r.trace.returned = r.scenes.size();
  return r;
}

}  // namespace vpg
