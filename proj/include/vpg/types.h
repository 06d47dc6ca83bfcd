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

#include <array>
#include <bitset>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vpg {

inline constexpr size_t kDefaultDimension = 256;
inline constexpr size_t kBinaryCodeBits = 1024;

// 16-byte content digest identifying an image. Ordered lexicographically so
// it can break ties deterministically.
struct ImageSignature {
  std::array<uint8_t, 16> bytes{};

  std::string to_hex() const;
  static ImageSignature from_hex(std::string_view hex);
  // Synthetic digest for generated images: a pure function of its inputs.
  static ImageSignature derive(uint64_t seed, std::string_view kind, uint64_t id);

  auto operator<=>(const ImageSignature&) const = default;
};

struct ImageSignatureHash {
  size_t operator()(const ImageSignature& s) const noexcept;
};

// Dense visual embedding. Values are always finite.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<float> values);

  size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::span<const float> values() const { return values_; }
  float operator[](size_t i) const { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

using BinaryEmbedding = std::bitset<kBinaryCodeBits>;

struct NearDupSignature {
  uint64_t bits = 0;
  friend bool operator==(const NearDupSignature&, const NearDupSignature&) = default;
};

struct BoundingBox {
  float x = 0;
  float y = 0;
  float w = 0;
  float h = 0;

  float area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }
  bool within(float image_width, float image_height) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
  friend auto operator<=>(const BoundingBox&, const BoundingBox&) = default;
};

// Intersection over union of two axis-aligned boxes; 0 when they do not overlap.
double iou(const BoundingBox& a, const BoundingBox& b);

enum class Domain : uint8_t { kFashion = 0, kHomeDecor = 1 };

std::string_view domain_name(Domain d);
Domain domain_from_name(std::string_view name);

// Shopping category from the fixed taxonomy below.
struct Category {
  uint16_t id = 0;

  std::string_view name() const;
  Domain domain() const;
  static Category from_name(std::string_view name);
  static Category from_id(uint16_t id);

  friend auto operator<=>(const Category&, const Category&) = default;
};

// All taxonomy categories in id order.
const std::vector<Category>& taxonomy();
std::vector<Category> categories_in(Domain d);

struct DetectedObject {
  BoundingBox box;
  Category category;
  float confidence = 0;
  Embedding embedding;

  friend bool operator==(const DetectedObject&, const DetectedObject&) = default;
};

}  // namespace vpg

template <>
struct std::hash<vpg::ImageSignature> : vpg::ImageSignatureHash {};
