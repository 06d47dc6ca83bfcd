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

#include <chrono>
#include <random>
#include <set>
#include <thread>

#include "test_util.h"
#include "vpg/errors.h"
#include "vpg/forward_stl.h"
#include "vpg/synthetic_world.h"

namespace vpg {
namespace {

using testing::TempDir;

TEST(UserContext, ParsesAndNormalizes) {
  auto ctx = UserContext::parse("gender=f,country=us");
  EXPECT_EQ(ctx.gender, Gender::kFemale);
  EXPECT_EQ(ctx.country, "US");
  auto empty = UserContext::parse("");
  EXPECT_EQ(empty.gender, Gender::kUnspecified);
  EXPECT_EQ(empty.country, "unspecified");
  EXPECT_THROW(UserContext::parse("gender=x"), InvalidArgument);
  EXPECT_THROW(UserContext::parse("country=USA"), InvalidArgument);
  EXPECT_THROW(UserContext::parse("age=3"), InvalidArgument);
}

DetectedObject obj(const char* cat, float conf, float x = 0) {
  return DetectedObject{{x, 0, 10, 10}, Category::from_name(cat), conf, Embedding({x, conf})};
}

TEST(DecomposeScene, SortsByConfidence) {
  SceneEntry s;
  s.objects = {obj("top", 0.6f), obj("bag", 0.9f)};
  auto out = decompose_scene(s);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].confidence, 0.9f);
}

TEST(DecomposeScene, KeepsTopFourOfSeven) {
  SceneEntry s;
  const float conf[] = {0.51f, 0.97f, 0.62f, 0.88f, 0.75f, 0.93f, 0.55f};
  for (int i = 0; i < 7; ++i) s.objects.push_back(obj("top", conf[i], float(i)));
  auto out = decompose_scene(s, 4);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].confidence, 0.97f);
  EXPECT_EQ(out[1].confidence, 0.93f);
  EXPECT_EQ(out[2].confidence, 0.88f);
  EXPECT_EQ(out[3].confidence, 0.75f);
}

TEST(DecomposeScene, TiesKeepOrdinalOrder) {
  SceneEntry s;
  for (int i = 0; i < 5; ++i) s.objects.push_back(obj("top", 0.8f, float(i)));
  auto out = decompose_scene(s, 4);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(out[i].box.x, float(i));
}

ProductCandidate pc(uint64_t id, const char* cat = "top", bool safe = true) {
  ProductCandidate c;
  c.product.signature = ImageSignature::derive(5, "product", id);
  c.product.category = Category::from_name(cat);
  c.product.safe = safe;
  return c;
}

TEST(FilterCandidates, RemovesUnsafeAndOtherDomain) {
  std::vector<DetectedObject> objects{obj("top", 0.9f)};
  std::vector<std::vector<ProductCandidate>> cands{{pc(1), pc(2, "sofa"), pc(3, "top", false), pc(4, "shoes")}};
  auto out = filter_candidates(cands, objects);
  ASSERT_EQ(out[0].size(), 2u);
  EXPECT_EQ(out[0][0], pc(1));
  EXPECT_EQ(out[0][1], pc(4, "shoes"));
  std::vector<std::vector<ProductCandidate>> clean{{pc(1), pc(4, "shoes")}};
  EXPECT_EQ(filter_candidates(clean, objects), clean);
}

TEST(RoundRobinMerge, Interleaves) {
  std::vector<std::vector<ProductCandidate>> c{{pc(1), pc(2)}, {pc(11), pc(12)}};
  EXPECT_EQ(round_robin_merge(c, 3), (std::vector<ProductCandidate>{pc(1), pc(11), pc(2)}));
}

TEST(RoundRobinMerge, SingleObjectTopThree) {
  std::vector<std::vector<ProductCandidate>> c{{pc(1), pc(2), pc(3), pc(4), pc(5)}};
  EXPECT_EQ(round_robin_merge(c, 3), (std::vector<ProductCandidate>{pc(1), pc(2), pc(3)}));
}

TEST(RoundRobinMerge, SkipsDuplicateProducts) {
  std::vector<std::vector<ProductCandidate>> c{{pc(1), pc(2)}, {pc(1), pc(12)}};
  // a1 == b1 -> [a1, b2, a2]: the b1 slot is skipped, round 2 emits a2 then b2.
  auto out = round_robin_merge(c, 3);
  std::vector<ImageSignature> sigs;
  for (auto& p : out) sigs.push_back(p.product.signature);
  EXPECT_EQ(sigs, (std::vector<ImageSignature>{pc(1).product.signature, pc(2).product.signature,
                                               pc(12).product.signature}));
}

TEST(RoundRobinMerge, NeverDuplicatesOrInvents) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::vector<ProductCandidate>> c(rng() % 5);
    std::set<ImageSignature> inputs;
    for (auto& list : c) {
      const size_t n = rng() % 8;
      for (size_t i = 0; i < n; ++i) {
        list.push_back(pc(rng() % 12));
        inputs.insert(list.back().product.signature);
      }
    }
    const size_t n_out = 1 + rng() % 5;
    auto out = round_robin_merge(c, n_out);
    EXPECT_LE(out.size(), n_out);
    EXPECT_EQ(out.size(), std::min(n_out, inputs.size()));
    std::set<ImageSignature> seen;
    for (const auto& p : out) {
      EXPECT_TRUE(inputs.count(p.product.signature));
      EXPECT_TRUE(seen.insert(p.product.signature).second);
    }
  }
}

TEST(TtlLruCache, FreshThroughTtlExpiredAfter) {
  TtlLruCache<int, int> cache(10, 7200 * 1000);
  cache.put(1, 42, 0);
  EXPECT_EQ(cache.get(1, 7200 * 1000), 42);
  EXPECT_FALSE(cache.get(1, 7200 * 1000 + 1));
  EXPECT_EQ(cache.size(), 0u);
  EXPECT_EQ(cache.stats().expirations, 1u);
}

TEST(TtlLruCache, EvictsLeastRecentlyUsed) {
  TtlLruCache<int, int> cache(2, 1000);
  cache.put(1, 1, 0);
  cache.put(2, 2, 0);
  EXPECT_TRUE(cache.get(1, 0));  // 2 is now the oldest
  cache.put(3, 3, 0);
  EXPECT_TRUE(cache.get(1, 0));
  EXPECT_FALSE(cache.get(2, 0));
  EXPECT_TRUE(cache.get(3, 0));
  EXPECT_EQ(cache.stats().evictions, 1u);
}

TEST(TtlLruCache, NeverServesStaleEntriesUnderRandomClock) {
  std::mt19937_64 rng(8);
  TtlLruCache<int, int64_t> cache(16, 500);
  int64_t now = 0;
  for (int i = 0; i < 20000; ++i) {
    now += static_cast<int64_t>(rng() % 50);
    const int key = static_cast<int>(rng() % 32);
    if (rng() % 2) {
      cache.put(key, now, now);
    } else if (auto v = cache.get(key, now)) {
      ASSERT_LE(now - *v, 500);
    }
  }
}

class ForwardWorld : public ::testing::Test {
 protected:
  void SetUp() override {
    WorldConfig wc;
    wc.dimension = 32;
    wc.products = 150;
    wc.scenes = 400;
    world_ = std::make_unique<SyntheticWorld>(wc);
    store_ = FeatureStore::open(dir_ / "store");
    store_->backfill(world_->scene_entries());
    index_ = std::make_unique<VisualIndex>(VisualIndex::build(*store_, world_->product_entries(), {}));
    extractor_ = [this](const ImageSignature& s) { return world_->extract(s); };
    fwd_ = std::make_unique<ForwardStl>(*index_, *store_, extractor_, ForwardConfig{}, clock_.as_clock());
  }

  ImageSignature scene(size_t i) const { return world_->scenes()[i].signature; }

  TempDir dir_;
  ManualClock clock_;
  std::unique_ptr<SyntheticWorld> world_;
  std::unique_ptr<FeatureStore> store_;
  std::unique_ptr<VisualIndex> index_;
  Extractor extractor_;
  std::unique_ptr<ForwardStl> fwd_;
};

TEST_F(ForwardWorld, RetrieveProductsFindsTheObjectsProductFirst) {
  const auto& s = world_->scenes()[0];
  auto objects = decompose_scene(*store_->get(s.signature));
  auto cands = retrieve_products(objects, *index_, 12);
  ASSERT_EQ(cands.size(), objects.size());
  for (size_t i = 0; i < objects.size(); ++i) {
    ASSERT_EQ(cands[i].size(), 12u);
    EXPECT_EQ(cands[i][0].distance, 0.0f);
    EXPECT_EQ(world_->find_product(cands[i][0].product.signature)->id, *world_->product_at(s.signature, objects[i].box));
  }
  EXPECT_TRUE(retrieve_products({}, *index_, 12).empty());
}

TEST_F(ForwardWorld, BatchedRetrievalEqualsSequentialQueries) {
  auto objects = decompose_scene(*store_->get(scene(1)));
  auto batched = retrieve_products(objects, *index_, 12);
  for (size_t i = 0; i < objects.size(); ++i) {
    auto single = index_->products().search(objects[i].embedding, 12);
    ASSERT_EQ(single.size(), batched[i].size());
    for (size_t j = 0; j < single.size(); ++j) {
      EXPECT_EQ(index_->product(single[j].id).signature, batched[i][j].product.signature);
      EXPECT_EQ(single[j].distance, batched[i][j].distance);
    }
  }
}

TEST_F(ForwardWorld, MergedTopThreeHoldsTheScenesProducts) {
  for (const auto& s : world_->scenes()) {
    auto objects = decompose_scene(*store_->get(s.signature), 4);
    std::vector<ImageSignature> expected;
    for (const auto& o : objects) {
      const auto sig = world_->product(*world_->product_at(s.signature, o.box)).signature;
      if (std::find(expected.begin(), expected.end(), sig) == expected.end()) expected.push_back(sig);
    }
    if (expected.size() > 3) expected.resize(3);
    auto got = fwd_->compute(s.signature);
    ASSERT_LE(got.size(), 3u);
    std::vector<ImageSignature> got_sigs;
    for (const auto& p : got) got_sigs.push_back(p.product.signature);
    got_sigs.resize(std::min(got_sigs.size(), expected.size()));
    EXPECT_EQ(got_sigs, expected);
  }
  EXPECT_LE(fwd_->metrics().objects_queried, 4 * world_->scenes().size());
}

TEST_F(ForwardWorld, SecondLookupWithinTtlIsCached) {
  const UserContext ctx = UserContext::parse("gender=f,country=US");
  auto first = fwd_->lookup(scene(0), ctx);
  EXPECT_FALSE(first.served_from_cache);
  clock_.advance_seconds(7200);
  auto second = fwd_->lookup(scene(0), ctx);
  EXPECT_TRUE(second.served_from_cache);
  EXPECT_EQ(second.products, first.products);
  EXPECT_EQ(fwd_->metrics().pipeline_executions, 1u);
}

TEST_F(ForwardWorld, ExpiredEntryIsRecomputed) {
  const UserContext ctx;
  fwd_->lookup(scene(0), ctx);
  clock_.advance_seconds(7201);
  auto again = fwd_->lookup(scene(0), ctx);
  EXPECT_FALSE(again.served_from_cache);
  EXPECT_EQ(fwd_->metrics().pipeline_executions, 2u);
}

TEST_F(ForwardWorld, ContextIsPartOfTheKey) {
  fwd_->lookup(scene(0), UserContext::parse("country=US"));
  auto other = fwd_->lookup(scene(0), UserContext::parse("country=FR"));
  EXPECT_FALSE(other.served_from_cache);
  auto gender = fwd_->lookup(scene(0), UserContext::parse("country=US,gender=m"));
  EXPECT_FALSE(gender.served_from_cache);
  EXPECT_TRUE(fwd_->lookup(scene(0), UserContext::parse("country=US")).served_from_cache);
}

TEST_F(ForwardWorld, UnknownSceneThrows) {
  EXPECT_THROW(fwd_->lookup(ImageSignature{}, {}), UnknownEntityError);
}

TEST_F(ForwardWorld, ConcurrentIdenticalRequestsRunOnePipeline) {
  // Scene absent from the store so the pipeline includes a slow extraction.
  TempDir other;
  auto empty_store = FeatureStore::open(other / "store");
  Extractor slow = [this](const ImageSignature& s) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return world_->extract(s);
  };
  ForwardStl fwd(*index_, *empty_store, slow, ForwardConfig{}, clock_.as_clock());
  std::vector<std::thread> threads;
  std::vector<ForwardResult> results(32);
  for (int t = 0; t < 32; ++t) threads.emplace_back([&, t] { results[t] = fwd.lookup(scene(2), {}); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(fwd.metrics().pipeline_executions, 1u);
  for (const auto& r : results) EXPECT_EQ(r.products, results[0].products);
}

TEST_F(ForwardWorld, BatchOfCachedScenesQueriesNothing) {
  std::vector<ImageSignature> scenes;
  for (size_t i = 0; i < 5; ++i) scenes.push_back(scene(i));
  fwd_->batch(scenes, {});
  const auto before = fwd_->metrics();
  auto out = fwd_->batch(scenes, {});
  const auto after = fwd_->metrics();
  EXPECT_EQ(after.index_queries, before.index_queries);
  EXPECT_EQ(after.pipeline_executions, before.pipeline_executions);
  for (const auto& [sig, item] : out) EXPECT_TRUE(item.result->served_from_cache);
}

TEST_F(ForwardWorld, BatchRunsOnlyTheMisses) {
  fwd_->lookup(scene(0), {});
  fwd_->lookup(scene(1), {});
  std::vector<ImageSignature> scenes{scene(0), scene(1), scene(2), scene(3), scene(4)};
  const auto before = fwd_->metrics().pipeline_executions;
  auto out = fwd_->batch(scenes, {});
  EXPECT_EQ(fwd_->metrics().pipeline_executions - before, 3u);
  ASSERT_EQ(out.size(), 5u);
}

TEST_F(ForwardWorld, BatchEqualsSequentialLookups) {
  std::vector<ImageSignature> scenes{scene(5), scene(6), scene(7), scene(8), scene(9)};
  auto out = fwd_->batch(scenes, {});
  ForwardStl fresh(*index_, *store_, extractor_, ForwardConfig{}, clock_.as_clock());
  for (const auto& s : scenes) EXPECT_EQ(out.at(s).result->products, fresh.lookup(s, {}).products);
}

TEST_F(ForwardWorld, BatchReportsPerSceneErrors) {
  std::vector<ImageSignature> scenes{scene(0), ImageSignature{}};
  auto out = fwd_->batch(scenes, {});
  EXPECT_TRUE(out.at(scene(0)).result);
  EXPECT_FALSE(out.at(ImageSignature{}).result);
  EXPECT_FALSE(out.at(ImageSignature{}).error.empty());
  std::vector<ImageSignature> six(6, scene(0));
  EXPECT_THROW(fwd_->batch(six, {}), InvalidArgument);
}

TEST(ForwardConfig, ReadsAndValidates) {
  auto r = ConfigReader::from_string("ttl_seconds = 60\nparallelism = 0\n");
  auto c = ForwardConfig::read(r);
  EXPECT_EQ(c.ttl_seconds, 60);
  EXPECT_THROW(r.finish(), ConfigError);
}

}  // namespace
}  // namespace vpg
