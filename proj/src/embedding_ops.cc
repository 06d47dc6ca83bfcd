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

#include "vpg/embedding_ops.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "vpg/errors.h"
#include "vpg/random.h"

namespace vpg {

namespace {

constexpr int kNearDupBits = 64;

// Projection directions for near-dup signatures, cached per (seed, dim).
std::shared_ptr<const std::vector<float>> projections(uint64_t seed, size_t dim) {
  static std::mutex mu;
  static std::map<std::pair<uint64_t, size_t>, std::shared_ptr<const std::vector<float>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{seed, dim}];
  if (!slot) {
    Rng rng(derive_seed(seed, "near_dup_projection", {dim}));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    auto matrix = std::make_shared<std::vector<float>>(kNearDupBits * dim);
    for (auto& v : *matrix) v = normal(rng);
    slot = std::move(matrix);
  }
  return slot;
}

constexpr char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int base64_value(unsigned char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

float squared_l2(const float* a, const float* b, size_t dim) {
  size_t i = 0;
  float sum = 0.0f;
#if defined(__AVX2__) && defined(__FMA__)
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  for (; i + 16 <= dim; i += 16) {
    __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
    acc1 = _mm256_fmadd_ps(d1, d1, acc1);
  }
  __m256 acc = _mm256_add_ps(acc0, acc1);
  __m128 lo = _mm256_castps256_ps128(acc);
  __m128 hi = _mm256_extractf128_ps(acc, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  sum = _mm_cvtss_f32(lo);
#endif
  for (; i < dim; ++i) {
    float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

float euclidean_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  return std::sqrt(squared_l2(a.data(), b.data(), a.size()));
}

float euclidean_distance(const Embedding& a, const Embedding& b) {
  return euclidean_distance(a.values(), b.values());
}

int hamming_distance(const BinaryEmbedding& a, const BinaryEmbedding& b) {
  return static_cast<int>((a ^ b).count());
}

int hamming_distance(NearDupSignature a, NearDupSignature b) {
  return std::popcount(a.bits ^ b.bits);
}

NearDupSignature near_dup_signature(const Embedding& e, uint64_t seed) {
  const size_t dim = e.dim();
  auto matrix = projections(seed, dim);
  NearDupSignature sig;
  for (int bit = 0; bit < kNearDupBits; ++bit) {
    const float* row = matrix->data() + bit * dim;
    double dot = 0.0;
    for (size_t i = 0; i < dim; ++i) dot += static_cast<double>(row[i]) * e[i];
    if (dot > 0.0) sig.bits |= uint64_t{1} << bit;
  }
  return sig;
}

BinaryEmbedding binarize(const Embedding& e, std::span<const float> thresholds) {
  if (e.dim() != kBinaryCodeBits || thresholds.size() != kBinaryCodeBits) {
    throw DimensionError("binarize expects " + std::to_string(kBinaryCodeBits) +
                         "-d embedding and thresholds, got " + std::to_string(e.dim()) + " and " +
                         std::to_string(thresholds.size()));
  }
  BinaryEmbedding code;
  for (size_t i = 0; i < kBinaryCodeBits; ++i) code[i] = e[i] > thresholds[i];
  return code;
}

Embedding normalized(const Embedding& e) {
  double norm2 = 0.0;
  for (float v : e.values()) norm2 += static_cast<double>(v) * v;
  if (norm2 == 0.0) return e;
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(e.dim());
  for (size_t i = 0; i < e.dim(); ++i) out[i] = static_cast<float>(e[i] * inv);
  return Embedding(std::move(out));
}

uint16_t float_to_half(float f) {
  const uint32_t x = std::bit_cast<uint32_t>(f);
  const uint16_t sign = static_cast<uint16_t>((x >> 16) & 0x8000);
  uint32_t abs = x & 0x7fffffff;
  if (abs >= 0x7f800000) return sign | 0x7c00 | (abs > 0x7f800000 ? 0x200 : 0);
  if (abs >= 0x477ff000) return sign | 0x7c00;  // rounds past 65504
  if (abs < 0x38800000) {
    // Subnormal half: scale to units of 2^-24 and round to nearest even.
    float scaled = std::bit_cast<float>(abs) * 16777216.0f;
    return sign | static_cast<uint16_t>(std::nearbyint(scaled));
  }
  const uint32_t odd = (abs >> 13) & 1;
  abs += 0xc8000fffU + odd;
  return sign | static_cast<uint16_t>(abs >> 13);
}

float half_to_float(uint16_t h) {
  const uint32_t sign = static_cast<uint32_t>(h & 0x8000) << 16;
  const uint32_t exp = (h >> 10) & 0x1f;
  const uint32_t mant = h & 0x3ff;
  if (exp == 0) {
    float v = static_cast<float>(mant) / 16777216.0f;
    return sign ? -v : v;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7f800000 | (mant << 13));
  return std::bit_cast<float>(sign | ((exp + 112) << 23) | (mant << 13));
}

std::string encode_half(const Embedding& e) {
  std::string out(e.dim() * 2, '\0');
  for (size_t i = 0; i < e.dim(); ++i) {
    uint16_t h = float_to_half(e[i]);
    out[2 * i] = static_cast<char>(h & 0xff);
    out[2 * i + 1] = static_cast<char>(h >> 8);
  }
  return out;
}

Embedding decode_half(std::string_view bytes) {
  if (bytes.size() % 2 != 0) throw FormatError("half-precision payload has odd length");
  std::vector<float> values(bytes.size() / 2);
  for (size_t i = 0; i < values.size(); ++i) {
    uint16_t h = static_cast<uint8_t>(bytes[2 * i]) | static_cast<uint16_t>(static_cast<uint8_t>(bytes[2 * i + 1]) << 8);
    values[i] = half_to_float(h);
  }
  return Embedding(std::move(values));
}

Embedding round_trip_half(const Embedding& e) { return decode_half(encode_half(e)); }

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    uint32_t n = static_cast<uint8_t>(bytes[i]) << 16 | static_cast<uint8_t>(bytes[i + 1]) << 8 |
                 static_cast<uint8_t>(bytes[i + 2]);
    out += kBase64Alphabet[n >> 18];
    out += kBase64Alphabet[(n >> 12) & 63];
    out += kBase64Alphabet[(n >> 6) & 63];
    out += kBase64Alphabet[n & 63];
  }
  const size_t rest = bytes.size() - i;
  if (rest > 0) {
    uint32_t n = static_cast<uint8_t>(bytes[i]) << 16;
    if (rest == 2) n |= static_cast<uint8_t>(bytes[i + 1]) << 8;
    out += kBase64Alphabet[n >> 18];
    out += kBase64Alphabet[(n >> 12) & 63];
    out += rest == 2 ? kBase64Alphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      unsigned char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        v[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[j] = base64_value(c)) < 0) throw FormatError("invalid base64 character");
    }
    uint32_t n = v[0] << 18 | v[1] << 12 | v[2] << 6 | v[3];
    out += static_cast<char>(n >> 16);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

std::string embedding_to_base64(const Embedding& e) { return base64_encode(encode_half(e)); }

Embedding embedding_from_base64(std::string_view text) { return decode_half(base64_decode(text)); }

}  // namespace vpg
