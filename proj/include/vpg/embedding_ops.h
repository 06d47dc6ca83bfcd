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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpg/types.h"

namespace vpg {

inline constexpr uint64_t kDefaultNearDupSeed = 0x5eed'd0d0'cafe'f00dULL;
inline constexpr int kDefaultNearDupHammingMax = 8;

// Euclidean distance; throws DimensionError on mismatched sizes.
float euclidean_distance(const Embedding& a, const Embedding& b);
float euclidean_distance(std::span<const float> a, std::span<const float> b);
// Squared L2 without the dimension check, for hot loops.
float squared_l2(const float* a, const float* b, size_t dim);

int hamming_distance(const BinaryEmbedding& a, const BinaryEmbedding& b);
int hamming_distance(NearDupSignature a, NearDupSignature b);

// 64 sign bits of random projections; projection directions depend only on
// (seed, dimension), so the result is a pure function of its inputs.
NearDupSignature near_dup_signature(const Embedding& e, uint64_t seed = kDefaultNearDupSeed);

// Bit i is set iff values[i] > thresholds[i]. Requires a 1024-d embedding.
BinaryEmbedding binarize(const Embedding& e, std::span<const float> thresholds);

Embedding normalized(const Embedding& e);

// IEEE 754 binary16 conversion, round-to-nearest-even.
uint16_t float_to_half(float f);
float half_to_float(uint16_t h);

// Little-endian half-precision byte encoding used for every at-rest embedding.
std::string encode_half(const Embedding& e);
Embedding decode_half(std::string_view bytes);
// Quantizes through half precision, i.e. decode_half(encode_half(e)).
Embedding round_trip_half(const Embedding& e);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string embedding_to_base64(const Embedding& e);
Embedding embedding_from_base64(std::string_view text);

}  // namespace vpg
