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

#include "vpg/synthetic_world.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "vpg/embedding_ops.h"
#include "vpg/errors.h"
#include "vpg/random.h"

namespace vpg {

namespace {

constexpr int kGrid = 3;  // scenes are laid out on a 3x3 grid, one object per cell
constexpr int kMaxLatentAttempts = 1000;
constexpr double kDuplicateShift = 0.08;

uint64_t signature_key(const ImageSignature& sig) { return ImageSignatureHash{}(sig); }

uint64_t box_key(const BoundingBox& b) {
  auto bits = [](float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    return uint64_t{u};
  };
  return mix64(bits(b.x) << 32 | bits(b.y)) ^ mix64((bits(b.w) << 32 | bits(b.h)) ^ 0xabcdefULL);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool chance(Rng& rng, double p) { return p > 0 && uniform(rng, 0.0, 1.0) < p; }

Embedding random_unit(Rng& rng, size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  double n2 = 0;
  std::vector<double> raw(dim);
  for (size_t i = 0; i < dim; ++i) {
    raw[i] = normal(rng);
    n2 += raw[i] * raw[i];
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (size_t i = 0; i < dim; ++i) v[i] = static_cast<float>(raw[i] * inv);
  return Embedding(std::move(v));
}

}  // namespace

WorldConfig WorldConfig::read(ConfigReader& r, const std::string& p) {
  WorldConfig c;
  c.seed = r.get_u64(p + "seed", c.seed);
  c.dimension = static_cast<size_t>(r.get_int(p + "dimension", c.dimension, 2, 4096));
  c.products = static_cast<size_t>(r.get_int(p + "products", c.products, 1, 10'000'000));
  c.scenes = static_cast<size_t>(r.get_int(p + "scenes", c.scenes, 0, 10'000'000));
  c.noise_sigma = r.get_double(p + "noise_sigma", c.noise_sigma, 0.0, 10.0);
  c.min_separation = r.get_double(p + "min_separation", c.min_separation, 0.0, 1.9);
  c.min_objects = static_cast<size_t>(r.get_int(p + "min_objects", c.min_objects, 0, kGrid * kGrid));
  c.max_objects = static_cast<size_t>(r.get_int(p + "max_objects", c.max_objects, 0, kGrid * kGrid));
  if (c.min_objects > c.max_objects) r.add_violation(p + "min_objects must not exceed " + p + "max_objects");
  c.fashion_fraction = r.get_double(p + "fashion_fraction", c.fashion_fraction, 0.0, 1.0);
  auto rate = [&](const char* key, double def) { return r.get_double(p + key, def, 0.0, 1.0); };
  c.near_duplicate_rate = rate("near_duplicate_rate", c.near_duplicate_rate);
  c.non_inspirational_rate = rate("non_inspirational_rate", c.non_inspirational_rate);
  c.grayscale_rate = rate("grayscale_rate", c.grayscale_rate);
  c.collage_rate = rate("collage_rate", c.collage_rate);
  c.low_resolution_rate = rate("low_resolution_rate", c.low_resolution_rate);
  c.blurry_rate = rate("blurry_rate", c.blurry_rate);
  c.unsafe_rate = rate("unsafe_rate", c.unsafe_rate);
  c.out_of_stock_rate = rate("out_of_stock_rate", c.out_of_stock_rate);
  c.illegitimate_rate = rate("illegitimate_rate", c.illegitimate_rate);
  c.corruption.duplicate_rate = rate("duplicate_rate", c.corruption.duplicate_rate);
  c.corruption.false_positive_rate = rate("false_positive_rate", c.corruption.false_positive_rate);
  return c;
}

WorldConfig WorldConfig::from_file(const std::filesystem::path& path) {
  ConfigReader reader = ConfigReader::from_file(path);
  WorldConfig c = read(reader);
  reader.finish();
  return c;
}

SyntheticWorld::SyntheticWorld(WorldConfig config) : config_(std::move(config)) {
  generate_products();
  generate_scenes();
}

void SyntheticWorld::generate_products() {
  const size_t n = config_.products;
  const auto& cats = taxonomy();
  products_.reserve(n);
  const float min_sq = static_cast<float>(config_.min_separation * config_.min_separation);
  for (uint32_t id = 0; id < n; ++id) {
    ProductTruth p;
    p.id = id;
    p.signature = ImageSignature::derive(config_.seed, "product", id);
    p.category = cats[id % cats.size()];
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxLatentAttempts) {
        throw InvalidArgument("cannot place product latents at min_separation " +
                              std::to_string(config_.min_separation));
      }
      Rng rng(derive_seed(config_.seed, "latent", {id, static_cast<uint64_t>(attempt)}));
      p.latent = random_unit(rng, config_.dimension);
      bool ok = true;
      for (const auto& q : products_) {
        if (squared_l2(p.latent.values().data(), q.latent.values().data(), config_.dimension) < min_sq) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    Rng flags(derive_seed(config_.seed, "product_flags", {id}));
    p.safe = !chance(flags, config_.unsafe_rate);
    p.in_stock = !chance(flags, config_.out_of_stock_rate);
    p.legitimate_domain = !chance(flags, config_.illegitimate_rate);
    product_by_sig_.emplace(p.signature, id);
    products_.push_back(std::move(p));
  }
}

void SyntheticWorld::generate_scenes() {
  std::map<Category, std::vector<uint32_t>> by_category;
  for (const auto& p : products_) by_category[p.category].push_back(p.id);

  scenes_.reserve(config_.scenes);
  for (uint32_t id = 0; id < config_.scenes; ++id) {
    Rng rng(derive_seed(config_.seed, "scene", {id}));
    SceneTruth s;
    s.id = id;
    s.signature = ImageSignature::derive(config_.seed, "scene", id);

    if (id > 0 && chance(rng, config_.near_duplicate_rate)) {
      const uint32_t source = static_cast<uint32_t>(rng() % id);
      s.objects = scenes_[source].objects;
      s.metadata = scenes_[source].metadata;
      s.near_duplicate_of = source;
      scene_by_sig_.emplace(s.signature, id);
      scenes_.push_back(std::move(s));
      continue;
    }

    ImageMetadata& m = s.metadata;
    m.domain = chance(rng, config_.fashion_fraction) ? Domain::kFashion : Domain::kHomeDecor;
    const bool low_res = chance(rng, config_.low_resolution_rate);
    const int lo = low_res ? 200 : 800, hi = low_res ? 380 : 1600;
    m.width = static_cast<uint32_t>(std::uniform_int_distribution<int>(lo, hi)(rng));
    m.height = static_cast<uint32_t>(std::uniform_int_distribution<int>(lo, hi)(rng));
    m.is_inspirational = !chance(rng, config_.non_inspirational_rate);
    m.is_grayscale = chance(rng, config_.grayscale_rate);
    m.is_collage_or_screenshot = chance(rng, config_.collage_rate);
    const bool blurry = chance(rng, config_.blurry_rate);
    m.blur_score = static_cast<float>(blurry ? uniform(rng, 0.7, 1.0) : uniform(rng, 0.0, 0.4));

    std::vector<Category> available;
    for (const auto& c : categories_in(m.domain)) {
      if (by_category.count(c)) available.push_back(c);
    }
    std::shuffle(available.begin(), available.end(), rng);
    size_t k = std::uniform_int_distribution<size_t>(config_.min_objects, config_.max_objects)(rng);
    k = std::min({k, available.size(), size_t{kGrid * kGrid}});

    std::vector<int> cells(kGrid * kGrid);
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    const double cw = static_cast<double>(m.width) / kGrid, ch = static_cast<double>(m.height) / kGrid;
    for (size_t i = 0; i < k; ++i) {
      const auto& candidates = by_category.at(available[i]);
      ObjectTruth o;
      o.product_id = candidates[rng() % candidates.size()];
      o.category = available[i];
      const double bw = std::floor(cw * uniform(rng, 0.5, 0.9));
      const double bh = std::floor(ch * uniform(rng, 0.5, 0.9));
      const double cx = (cells[i] % kGrid) * cw, cy = (cells[i] / kGrid) * ch;
      o.box.x = static_cast<float>(std::floor(cx + uniform(rng, 0.0, cw - bw)));
      o.box.y = static_cast<float>(std::floor(cy + uniform(rng, 0.0, ch - bh)));
      o.box.w = static_cast<float>(bw);
      o.box.h = static_cast<float>(bh);
      s.objects.push_back(o);
    }
    scene_by_sig_.emplace(s.signature, id);
    scenes_.push_back(std::move(s));
  }
}

const ProductTruth* SyntheticWorld::find_product(const ImageSignature& sig) const {
  auto it = product_by_sig_.find(sig);
  return it == product_by_sig_.end() ? nullptr : &products_[it->second];
}

const SceneTruth* SyntheticWorld::find_scene(const ImageSignature& sig) const {
  auto it = scene_by_sig_.find(sig);
  return it == scene_by_sig_.end() ? nullptr : &scenes_[it->second];
}

std::optional<uint32_t> SyntheticWorld::product_at(const ImageSignature& sig, const BoundingBox& box) const {
  if (const auto* scene = find_scene(sig)) {
    for (const auto& o : scene->objects) {
      if (o.box == box) return o.product_id;
    }
    return std::nullopt;
  }
  if (const auto* p = find_product(sig)) return p->id;
  return std::nullopt;
}

Embedding SyntheticWorld::noisy(const Embedding& latent, uint64_t noise_seed) const {
  if (config_.noise_sigma == 0.0) return latent;
  Rng rng(noise_seed);
  const double sd = config_.noise_sigma / std::sqrt(static_cast<double>(latent.dim()));
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<float> v(latent.dim());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(latent[i] + normal(rng));
  return normalized(Embedding(std::move(v)));
}

Embedding SyntheticWorld::scene_latent(const SceneTruth& scene) const {
  std::vector<float> sum(config_.dimension, 0.0f);
  for (const auto& o : scene.objects) {
    const auto& latent = products_[o.product_id].latent;
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += latent[i];
  }
  if (scene.objects.empty()) {
    Rng rng(derive_seed(config_.seed, "empty_scene", {scene.id}));
    return random_unit(rng, config_.dimension);
  }
  return normalized(Embedding(std::move(sum)));
}

Embedding SyntheticWorld::embed(const ImageSignature& sig) const {
  if (const auto* p = find_product(sig)) {
    return noisy(p->latent, derive_seed(config_.seed, "noise/product", {p->id}));
  }
  if (const auto* s = find_scene(sig)) {
    return noisy(scene_latent(*s), derive_seed(config_.seed, "noise/scene", {signature_key(sig)}));
  }
  throw UnknownEntityError("image " + sig.to_hex() + " is not part of the synthetic world");
}

Embedding SyntheticWorld::embed(const ImageSignature& sig, const BoundingBox& box) const {
  auto product = product_at(sig, box);
  if (!product) {
    throw UnknownEntityError("no ground-truth object at the given box in " + sig.to_hex());
  }
  return noisy(products_[*product].latent, derive_seed(config_.seed, "noise/crop", {signature_key(sig), box_key(box)}));
}

std::vector<RawDetection> SyntheticWorld::detect_raw(const SceneTruth& scene,
                                                     const CorruptionConfig& corruption) const {
  std::vector<RawDetection> out;
  Rng corrupt(derive_seed(config_.seed, "corruption", {scene.id}));
  const auto domain_cats = categories_in(scene.metadata.domain);
  const float width = static_cast<float>(scene.metadata.width);
  const float height = static_cast<float>(scene.metadata.height);

  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectTruth& o = scene.objects[i];
    Rng rng(derive_seed(config_.seed, "confidence", {scene.id, i}));
    RawDetection det;
    det.box = o.box;
    det.confidence = static_cast<float>(uniform(rng, 0.5, 1.0));
    det.scores[o.category] = det.confidence;
    for (int extra = 0; extra < 2; ++extra) {
      Category other = domain_cats[rng() % domain_cats.size()];
      if (other != o.category) det.scores[other] = static_cast<float>(uniform(rng, 0.0, det.confidence * 0.5));
    }
    det.embedding = embed(scene.signature, o.box);
    det.source_object = static_cast<int>(i);
    out.push_back(det);

    if (chance(corrupt, corruption.duplicate_rate)) {
      RawDetection dup;
      double dx = uniform(corrupt, -kDuplicateShift, kDuplicateShift) * o.box.w;
      double dy = uniform(corrupt, -kDuplicateShift, kDuplicateShift) * o.box.h;
      if (o.box.x + dx < 0 || o.box.x + dx + o.box.w > width) dx = -dx;
      if (o.box.y + dy < 0 || o.box.y + dy + o.box.h > height) dy = -dy;
      dup.box = BoundingBox{static_cast<float>(o.box.x + dx), static_cast<float>(o.box.y + dy), o.box.w, o.box.h};
      // A weaker secondary response that may carry a different class label.
      dup.confidence = static_cast<float>(det.confidence * uniform(corrupt, 0.6, 0.95));
      dup.scores[domain_cats[corrupt() % domain_cats.size()]] = dup.confidence;
      dup.embedding = noisy(products_[o.product_id].latent,
                            derive_seed(config_.seed, "noise/crop", {signature_key(scene.signature), box_key(dup.box)}));
      dup.source_object = static_cast<int>(i);
      out.push_back(dup);
    }
    if (chance(corrupt, corruption.false_positive_rate)) {
      RawDetection fp;
      const float bw = static_cast<float>(std::floor(width * uniform(corrupt, 0.05, 0.1)));
      const float bh = static_cast<float>(std::floor(height * uniform(corrupt, 0.05, 0.1)));
      fp.box = BoundingBox{static_cast<float>(std::floor(uniform(corrupt, 0.0, width - bw))),
                           static_cast<float>(std::floor(uniform(corrupt, 0.0, height - bh))), bw, bh};
      fp.confidence = static_cast<float>(uniform(corrupt, 0.05, 0.45));
      fp.scores[domain_cats[corrupt() % domain_cats.size()]] = fp.confidence;
      Rng emb(derive_seed(config_.seed, "false_positive", {scene.id, i}));
      fp.embedding = random_unit(emb, config_.dimension);
      out.push_back(fp);
    }
  }
  return out;
}

std::vector<DetectedObject> SyntheticWorld::detect(const SceneTruth& scene,
                                                   const CorruptionConfig& corruption) const {
  std::vector<DetectedObject> out;
  for (auto& det : detect_raw(scene, corruption)) {
    auto best = std::max_element(det.scores.begin(), det.scores.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    out.push_back(DetectedObject{det.box, best->first, det.confidence, std::move(det.embedding)});
  }
  return out;
}

std::vector<DetectedObject> SyntheticWorld::detect(const SceneTruth& scene) const {
  return detect(scene, config_.corruption);
}

SceneEntry SyntheticWorld::scene_entry(const SceneTruth& scene) const {
  SceneEntry e;
  e.signature = scene.signature;
  e.full_embedding = embed(scene.signature);
  e.objects = detect(scene);
  e.metadata = scene.metadata;
  e.source = EntrySource::kBackfill;
  return e;
}

ProductEntry SyntheticWorld::product_entry(const ProductTruth& p) const {
  ProductEntry e;
  e.signature = p.signature;
  e.embedding = embed(p.signature);
  e.category = p.category;
  e.in_stock = p.in_stock;
  e.legitimate_domain = p.legitimate_domain;
  e.safe = p.safe;
  return e;
}

std::vector<SceneEntry> SyntheticWorld::scene_entries() const {
  std::vector<SceneEntry> out;
  out.reserve(scenes_.size());
  for (const auto& s : scenes_) out.push_back(scene_entry(s));
  return out;
}

std::vector<ProductEntry> SyntheticWorld::product_entries() const {
  std::vector<ProductEntry> out;
  out.reserve(products_.size());
  for (const auto& p : products_) out.push_back(product_entry(p));
  return out;
}

SceneEntry SyntheticWorld::extract(const ImageSignature& sig) const {
  if (const auto* s = find_scene(sig)) return scene_entry(*s);
  if (find_product(sig)) {
    SceneEntry e;
    e.signature = sig;
    e.full_embedding = embed(sig);
    return e;
  }
  throw UnknownEntityError("image " + sig.to_hex() + " is not part of the synthetic world");
}

nlohmann::json SyntheticWorld::truth_json_line(const ProductTruth& p) const {
  return {{"kind", "product"},
          {"signature", p.signature.to_hex()},
          {"product_id", p.id},
          {"category", p.category.name()},
          {"latent", embedding_to_base64(p.latent)}};
}

nlohmann::json SyntheticWorld::truth_json_line(const SceneTruth& s) const {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& o : s.objects) ids.push_back(o.product_id);
  nlohmann::json j = {{"kind", "scene"}, {"signature", s.signature.to_hex()}, {"scene_id", s.id}, {"products", ids}};
  if (s.near_duplicate_of) j["near_duplicate_of"] = *s.near_duplicate_of;
  return j;
}

void SyntheticWorld::write_truth_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  for (const auto& p : products_) out << truth_json_line(p).dump() << '\n';
  for (const auto& s : scenes_) out << truth_json_line(s).dump() << '\n';
}

WorldTruth WorldTruth::from_world(const SyntheticWorld& world) {
  WorldTruth t;
  for (const auto& p : world.products()) {
    t.product_of_image[p.signature] = p.id;
    t.category_of[p.id] = p.category;
    t.latent_of[p.id] = p.latent;
  }
  for (const auto& s : world.scenes()) {
    auto& ids = t.scene_products[s.signature];
    for (const auto& o : s.objects) ids.push_back(o.product_id);
  }
  return t;
}

WorldTruth WorldTruth::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  WorldTruth t;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto sig = ImageSignature::from_hex(j.at("signature").get<std::string>());
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "product") {
        const auto id = j.at("product_id").get<uint32_t>();
        t.product_of_image[sig] = id;
        t.category_of[id] = Category::from_name(j.at("category").get<std::string>());
        if (j.contains("latent")) t.latent_of[id] = embedding_from_base64(j.at("latent").get<std::string>());
      } else if (kind == "scene") {
        t.scene_products[sig] = j.at("products").get<std::vector<uint32_t>>();
      } else {
        throw FormatError("unknown truth kind '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return t;
}

}  // namespace vpg
