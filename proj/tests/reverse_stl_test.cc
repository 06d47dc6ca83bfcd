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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "test_util.h"
#include "vpg/embedding_ops.h"
#include "vpg/errors.h"
#include "vpg/reverse_stl.h"
#include "vpg/synthetic_world.h"

namespace vpg {
namespace {

using testing::TempDir;

SceneCandidate cand(uint64_t id, float score, std::vector<float> emb = {0, 0, 0}, uint64_t near_dup = 0) {
  SceneCandidate c;
  c.scene = ImageSignature::derive(3, "scene", id);
  c.score = score;
  c.scene_embedding = Embedding(std::move(emb));
  c.near_dup = NearDupSignature{near_dup};
  return c;
}

std::vector<float> scores_of(const std::vector<SceneCandidate>& v) {
  std::vector<float> s;
  for (const auto& c : v) s.push_back(c.score);
  return s;
}

TEST(RelevanceFilter, KeepsScoresAtOrAboveThreshold) {
  std::vector<SceneCandidate> in{cand(0, 0.9f), cand(1, 0.7f), cand(2, 0.4f)};
  RelevanceCalibration cal{0.6, 100, 0.75};
  EXPECT_EQ(scores_of(relevance_filter(in, cal)), (std::vector<float>{0.9f, 0.7f}));
  in[1].score = 0.75f;
  cal.threshold = 0.75;
  EXPECT_EQ(relevance_filter(in, cal).size(), 2u);
  cal.threshold = 1.0;
  EXPECT_TRUE(relevance_filter(in, cal).empty());
}

TEST(RelevanceFilter, IsIdempotent) {
  std::vector<SceneCandidate> in{cand(0, 0.9f), cand(1, 0.7f), cand(2, 0.4f)};
  RelevanceCalibration cal{0.5, 100, 0.75};
  auto once = relevance_filter(in, cal);
  EXPECT_EQ(relevance_filter(once, cal), once);
}

TEST(Calibration, PooledPercentileOracle) {
  // 100 queries, one score each: {1..100} -> 75.25.
  std::vector<std::vector<float>> per_query;
  for (int i = 1; i <= 100; ++i) per_query.push_back({float(i)});
  EXPECT_DOUBLE_EQ(calibrate_from_scores(per_query, 0.75).threshold, 75.25);
  EXPECT_DOUBLE_EQ(calibrate_from_scores(per_query, 0.0).threshold, 1.0);
  EXPECT_EQ(calibrate_from_scores(per_query, 0.75).calibration_size, 100u);
}

TEST(Calibration, EqualScoresGiveThatScore) {
  std::vector<std::vector<float>> per_query(120, std::vector<float>(7, -0.25f));
  EXPECT_DOUBLE_EQ(calibrate_from_scores(per_query, 0.75).threshold, -0.25);
}

TEST(Calibration, PoolsOnlyTopFivePerQuery) {
  // Scores beyond rank 5 must not move the threshold.
  std::vector<std::vector<float>> a(100, std::vector<float>{5, 4, 3, 2, 1});
  auto b = a;
  for (auto& v : b) v.insert(v.end(), {-100, -100, -100});
  EXPECT_DOUBLE_EQ(calibrate_from_scores(a, 0.5).threshold, calibrate_from_scores(b, 0.5).threshold);
}

TEST(Calibration, RequiresOneHundredQueries) {
  std::vector<std::vector<float>> per_query(99, std::vector<float>{1.0f});
  EXPECT_THROW(calibrate_from_scores(per_query, 0.75), InsufficientCalibrationData);
}

TEST(Calibration, JsonRoundTrip) {
  TempDir dir;
  RelevanceCalibration cal{-0.125, 250, 0.75};
  cal.save(dir / "cal.json");
  auto back = RelevanceCalibration::load(dir / "cal.json");
  EXPECT_EQ(back.threshold, cal.threshold);
  EXPECT_EQ(back.calibration_size, 250u);
}

TEST(Dedup, IdenticalScenesKeepTheFirst) {
  auto a = cand(0, 0.9f, {0, 0, 0}, 0x0);
  auto b = cand(0, 0.5f, {0, 0, 0}, ~0ULL);
  auto out = dedup(std::vector<SceneCandidate>{a, b}, 8);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9f);
}

TEST(Dedup, NearDuplicateWithinHammingIsDropped) {
  // Hamming 6 (bits 0..5 differ) vs the allowed 8.
  auto a = cand(0, 0.9f, {0, 0, 0}, 0xff00);
  auto b = cand(1, 0.8f, {0, 0, 0}, 0xff3f);
  ASSERT_EQ(hamming_distance(a.near_dup, b.near_dup), 6);
  EXPECT_EQ(dedup(std::vector<SceneCandidate>{a, b}, 8).size(), 1u);
  EXPECT_EQ(dedup(std::vector<SceneCandidate>{a, b}, 5).size(), 2u);
}

TEST(Dedup, DistinctFarCandidatesUnchanged) {
  std::vector<SceneCandidate> in{cand(0, 0.9f, {}, 0x0), cand(1, 0.8f, {}, 0xffff), cand(2, 0.7f, {}, 0xffff0000)};
  for (auto& c : in) c.scene_embedding = Embedding({0.0f});
  EXPECT_EQ(dedup(in, 8), in);
}

TEST(Rerank, SingleCandidate) {
  std::vector<SceneCandidate> in{cand(0, 0.5f)};
  EXPECT_EQ(rerank(in, 10, 0.5), in);
}

TEST(Rerank, ZeroLambdaKeepsScoreOrder) {
  std::vector<SceneCandidate> in{cand(0, 0.9f, {0, 0, 0}), cand(1, 0.8f, {1, 0, 0}), cand(2, 0.8f, {0, 1, 0}),
                                 cand(3, 0.1f, {0, 0, 1})};
  EXPECT_EQ(rerank(in, 10, 0.0), in);
  EXPECT_EQ(rerank(in, 2, 0.0), std::vector<SceneCandidate>(in.begin(), in.begin() + 2));
}

TEST(Rerank, NearCopyOfPinnedTopIsDemoted) {
  // Hand-evaluated with lambda = 1, sim = -distance:
  //   B: 0.95 - 1 * (-0.01) = 0.96      (B sits 0.01 from A)
  //   C: 0.90 - 1 * (-1.00) = 1.90      (C sits 1.0 from A)
  //   D: 0.50 - 1 * (-2.00) = 2.50 -> D first, then C (min dist to {A,D} = 1.0: 1.90
  //      vs B: 0.96), then B, E.
  std::vector<SceneCandidate> in{
      cand(0, 1.00f, {0, 0, 0}),     // A
      cand(1, 0.95f, {0.01f, 0, 0}), // B
      cand(2, 0.90f, {0, 1, 0}),     // C
      cand(3, 0.50f, {0, 0, 2}),     // D
      cand(4, 0.10f, {0.02f, 0, 0}), // E
  };
  auto out = rerank(in, 5, 1.0);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(out[0].scene, in[0].scene);
  auto pos = [&](size_t i) {
    return std::find_if(out.begin(), out.end(), [&](auto& c) { return c.scene == in[i].scene; }) - out.begin();
  };
  EXPECT_EQ(pos(3), 1);
  EXPECT_EQ(pos(2), 2);
  EXPECT_GT(pos(1), pos(2));
}

// Randomized pipelines: conservation, idempotence, pinned top slot, no
// surviving near-duplicate pair.
TEST(ReversePipeline, InvariantsOnRandomizedInputs) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> u(-2, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 1 + rng() % 40;
    std::vector<SceneCandidate> in;
    for (size_t i = 0; i < n; ++i) {
      const uint64_t id = rng() % (n + 3);  // repeats exercise exact dedup
      uint64_t bits = rng();
      if (!in.empty() && rng() % 4 == 0) bits = in[rng() % in.size()].near_dup.bits ^ (1ULL << (rng() % 64));
      in.push_back(cand(id, u(rng), {u(rng), u(rng), u(rng)}, bits));
    }
    std::sort(in.begin(), in.end(), [](auto& a, auto& b) { return a.score > b.score; });
    RelevanceCalibration cal{double(u(rng)), 100, 0.75};
    auto f = relevance_filter(in, cal);
    size_t below = 0;
    for (const auto& c : in) below += c.score < cal.threshold;
    ASSERT_EQ(f.size() + below, in.size());
    ASSERT_EQ(relevance_filter(f, cal), f);

    const int hmax = int(rng() % 10);
    auto d = dedup(f, hmax);
    ASSERT_EQ(dedup(d, hmax), d);
    for (size_t i = 0; i < d.size(); ++i) {
      for (size_t j = i + 1; j < d.size(); ++j) {
        ASSERT_NE(d[i].scene, d[j].scene);
        ASSERT_GT(hamming_distance(d[i].near_dup, d[j].near_dup), hmax);
      }
    }
    if (d.empty()) continue;
    const double lambda = (rng() % 3) * 0.5;
    auto r = rerank(d, 10, lambda);
    ASSERT_EQ(r.size(), std::min<size_t>(10, d.size()));
    ASSERT_EQ(r[0], d[0]);
    std::set<ImageSignature> from;
    for (const auto& c : d) from.insert(c.scene);
    std::set<ImageSignature> seen;
    for (const auto& c : r) {
      ASSERT_TRUE(from.count(c.scene));
      ASSERT_TRUE(seen.insert(c.scene).second);
    }
  }
}

class ReverseWorld : public ::testing::Test {
 protected:
  void SetUp() override {
    WorldConfig wc;
    wc.dimension = 32;
    wc.products = 150;
    wc.scenes = 800;
    world_ = std::make_unique<SyntheticWorld>(wc);
    store_ = FeatureStore::open(dir_ / "store");
    store_->backfill(world_->scene_entries());
    index_ = std::make_unique<VisualIndex>(VisualIndex::build(*store_, world_->product_entries(), {}));
    rev_ = std::make_unique<ReverseStl>(*index_, *store_,
                                        [this](const ImageSignature& s) { return world_->extract(s); });
  }

  TempDir dir_;
  std::unique_ptr<SyntheticWorld> world_;
  std::unique_ptr<FeatureStore> store_;
  std::unique_ptr<VisualIndex> index_;
  std::unique_ptr<ReverseStl> rev_;
};

TEST_F(ReverseWorld, ProductInSingleSceneRanksThatSceneFirstAtScoreZero) {
  std::map<uint32_t, std::set<ImageSignature>> scenes_of;
  for (uint32_t i = 0; i < index_->object_count(); ++i) {
    const auto& o = index_->object_meta(i);
    scenes_of[*world_->product_at(o.parent, o.box)].insert(o.parent);
  }
  size_t checked = 0;
  for (const auto& [pid, scenes] : scenes_of) {
    auto r = rev_->retrieve_scenes(world_->product(pid).signature);
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].score, 0.0f);
    EXPECT_TRUE(scenes.count(r[0].scene));
    if (scenes.size() == 1) {
      EXPECT_EQ(r[0].scene, *scenes.begin());
      EXPECT_LT(r[1].score, 0.0f);
      ++checked;
    }
  }
  EXPECT_EQ(checked, std::count_if(scenes_of.begin(), scenes_of.end(), [](auto& kv) { return kv.second.size() == 1; }));
}

TEST_F(ReverseWorld, OneCandidatePerSceneWithItsBestObject) {
  const auto& p = world_->products()[3];
  auto r = rev_->retrieve_scenes(p.signature, 500);
  std::set<ImageSignature> seen;
  for (size_t i = 0; i < r.size(); ++i) {
    EXPECT_TRUE(seen.insert(r[i].scene).second);
    if (i > 0) {
      EXPECT_GE(r[i - 1].score, r[i].score);
    }
    // The candidate's score is its best object's score.
    float best = -1e9f;
    const Embedding q = round_trip_half(world_->embed(p.signature));
    for (uint32_t id = 0; id < index_->object_count(); ++id) {
      if (index_->object_meta(id).parent == r[i].scene) {
        best = std::max(best, -euclidean_distance(q.values(), index_->objects().vector(id)));
      }
    }
    EXPECT_FLOAT_EQ(best, r[i].score);
  }
}

TEST_F(ReverseWorld, EmptyIndexReturnsNothing) {
  VisualIndex empty = VisualIndex::build(std::span<const SceneEntry>{}, std::span<const ProductEntry>{}, {});
  ReverseStl rev(empty, *store_, [this](const ImageSignature& s) { return world_->extract(s); });
  EXPECT_TRUE(rev.retrieve_scenes(world_->products()[0].signature).empty());
}

TEST_F(ReverseWorld, UnknownProductThrows) {
  EXPECT_THROW(rev_->retrieve_scenes(ImageSignature{}), UnknownEntityError);
}

TEST_F(ReverseWorld, ProductEmbeddingFallsBackOnceThenHits) {
  const auto sig = world_->products()[0].signature;
  auto first = rev_->query(sig, RelevanceCalibration{-1e9, 100, 0.75});
  auto second = rev_->query(sig, RelevanceCalibration{-1e9, 100, 0.75});
  EXPECT_FALSE(first.store_hit);
  EXPECT_TRUE(second.store_hit);
  EXPECT_EQ(store_->metrics().fallback_extractions, 1u);
  EXPECT_EQ(first.to_json(), second.to_json());
}

TEST_F(ReverseWorld, NoiselessQueryTopResultContainsTheProduct) {
  std::vector<ImageSignature> cal_queries;
  for (const auto& p : world_->products()) cal_queries.push_back(p.signature);
  auto cal = rev_->calibrate(cal_queries, 0.75);
  EXPECT_EQ(cal.threshold, 0.0);
  std::set<uint32_t> indexed;
  for (uint32_t i = 0; i < index_->object_count(); ++i) {
    const auto& o = index_->object_meta(i);
    indexed.insert(*world_->product_at(o.parent, o.box));
  }
  for (uint32_t pid : indexed) {
    auto r = rev_->query(world_->product(pid).signature, cal);
    ASSERT_FALSE(r.scenes.empty());
    EXPECT_LE(r.scenes.size(), 10u);
    EXPECT_EQ(r.trace.returned, r.scenes.size());
    EXPECT_GE(r.trace.retrieved, r.trace.after_relevance);
    EXPECT_GE(r.trace.after_relevance, r.trace.after_dedup);
    const auto* scene = world_->find_scene(r.scenes[0].scene);
    bool contains = false;
    for (const auto& o : scene->objects) contains |= o.product_id == pid;
    EXPECT_TRUE(contains) << "product " << pid;
  }
}

TEST_F(ReverseWorld, CalibrationNeedsOneHundredQueries) {
  std::vector<ImageSignature> few;
  for (size_t i = 0; i < 99; ++i) few.push_back(world_->products()[i].signature);
  EXPECT_THROW(rev_->calibrate(few, 0.75), InsufficientCalibrationData);
}

TEST_F(ReverseWorld, ReplayIsByteIdentical) {
  RelevanceCalibration cal{-0.5, 100, 0.75};
  for (size_t i = 0; i < 20; ++i) {
    const auto sig = world_->products()[i].signature;
    EXPECT_EQ(rev_->query(sig, cal).to_json().dump(), rev_->query(sig, cal).to_json().dump());
  }
}

TEST(ReverseConfig, ReadsAndValidates) {
  auto r = ConfigReader::from_string("retrieval.k_raw = 50\nrerank.lambda = 0.25\nrerank.n_out = 0\nrelevance.percentile = 2\n");
  auto c = ReverseConfig::read(r);
  EXPECT_EQ(c.k_raw, 50u);
  EXPECT_EQ(c.lambda, 0.25);
  try {
    r.finish();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

}  // namespace
}  // namespace vpg
