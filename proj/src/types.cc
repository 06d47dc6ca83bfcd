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

#include "vpg/types.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "vpg/errors.h"
#include "vpg/random.h"

namespace vpg {

namespace {

struct TaxonomyEntry {
  std::string_view name;
  Domain domain;
};

constexpr std::array<TaxonomyEntry, 22> kTaxonomy = {{
    {"top", Domain::kFashion},        {"bottom", Domain::kFashion},
    {"dress", Domain::kFashion},      {"outerwear", Domain::kFashion},
    {"shoes", Domain::kFashion},      {"bag", Domain::kFashion},
    {"hat", Domain::kFashion},        {"eyewear", Domain::kFashion},
    {"jewelry", Domain::kFashion},    {"watch", Domain::kFashion},
    {"sofa", Domain::kHomeDecor},     {"chair", Domain::kHomeDecor},
    {"table", Domain::kHomeDecor},    {"lamp", Domain::kHomeDecor},
    {"rug", Domain::kHomeDecor},      {"bed", Domain::kHomeDecor},
    {"pillow", Domain::kHomeDecor},   {"vase", Domain::kHomeDecor},
    {"wall_art", Domain::kHomeDecor}, {"plant", Domain::kHomeDecor},
    {"mirror", Domain::kHomeDecor},   {"curtain", Domain::kHomeDecor},
}};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string ImageSignature::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(32, '0');
  for (size_t i = 0; i < bytes.size(); ++i) {
    out[2 * i] = kDigits[bytes[i] >> 4];
    out[2 * i + 1] = kDigits[bytes[i] & 0xf];
  }
  return out;
}

ImageSignature ImageSignature::from_hex(std::string_view hex) {
  if (hex.size() != 32) {
    throw InvalidArgument("image signature must be 32 hex characters, got " +
                          std::to_string(hex.size()));
  }
  ImageSignature sig;
  for (size_t i = 0; i < 16; ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw InvalidArgument("invalid hex in image signature: " + std::string(hex));
    sig.bytes[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return sig;
}

ImageSignature ImageSignature::derive(uint64_t seed, std::string_view kind, uint64_t id) {
  uint64_t hi = derive_seed(seed, kind, {id, 0});
  uint64_t lo = derive_seed(seed, kind, {id, 1});
  ImageSignature sig;
  for (int i = 0; i < 8; ++i) {
    sig.bytes[i] = static_cast<uint8_t>(hi >> (56 - 8 * i));
    sig.bytes[8 + i] = static_cast<uint8_t>(lo >> (56 - 8 * i));
  }
  return sig;
}

size_t ImageSignatureHash::operator()(const ImageSignature& s) const noexcept {
  uint64_t a, b;
  std::memcpy(&a, s.bytes.data(), 8);
  std::memcpy(&b, s.bytes.data() + 8, 8);
  return static_cast<size_t>(mix64(a ^ mix64(b)));
}

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
  for (float v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("embedding contains a non-finite value");
  }
}

bool BoundingBox::within(float image_width, float image_height) const {
  return x >= 0 && y >= 0 && x + w <= image_width && y + h <= image_height;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  double ix0 = std::max(a.x, b.x);
  double iy0 = std::max(a.y, b.y);
  double ix1 = std::min(static_cast<double>(a.x) + a.w, static_cast<double>(b.x) + b.w);
  double iy1 = std::min(static_cast<double>(a.y) + a.h, static_cast<double>(b.y) + b.h);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  double inter = (ix1 - ix0) * (iy1 - iy0);
  double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::string_view domain_name(Domain d) {
  return d == Domain::kFashion ? "fashion" : "home_decor";
}

Domain domain_from_name(std::string_view name) {
  if (name == "fashion") return Domain::kFashion;
  if (name == "home_decor") return Domain::kHomeDecor;
  throw InvalidArgument("unknown domain: " + std::string(name));
}

std::string_view Category::name() const { return kTaxonomy.at(id).name; }

Domain Category::domain() const { return kTaxonomy.at(id).domain; }

Category Category::from_name(std::string_view name) {
  for (size_t i = 0; i < kTaxonomy.size(); ++i) {
    if (kTaxonomy[i].name == name) return Category{static_cast<uint16_t>(i)};
  }
  throw InvalidArgument("category not in taxonomy: " + std::string(name));
}

Category Category::from_id(uint16_t id) {
  if (id >= kTaxonomy.size()) throw InvalidArgument("category id out of range: " + std::to_string(id));
  return Category{id};
}

const std::vector<Category>& taxonomy() {
  static const std::vector<Category> all = [] {
    std::vector<Category> v;
    for (size_t i = 0; i < kTaxonomy.size(); ++i) v.push_back(Category{static_cast<uint16_t>(i)});
    return v;
  }();
  return all;
}

std::vector<Category> categories_in(Domain d) {
  std::vector<Category> out;
  for (const auto& c : taxonomy()) {
    if (c.domain() == d) out.push_back(c);
  }
  return out;
}

}  // namespace vpg
