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
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "vpg/types.h"

namespace vpg {

// Percentile with linear interpolation between closest ranks (the numpy
// default): rank = q * (n - 1) over the sorted values. q in [0, 1].
double percentile(std::vector<double> values, double q);

// Per-category frequencies and their 75th percentile t.
class ClassHistogram {
 public:
  ClassHistogram() = default;
  explicit ClassHistogram(std::map<Category, uint64_t> counts);

  void add(Category c, uint64_t n = 1);
  void set(Category c, uint64_t n);

  const std::map<Category, uint64_t>& counts() const { return counts_; }
  uint64_t count(Category c) const;
  bool contains(Category c) const { return counts_.count(c) > 0; }
  double t() const { return t_; }

 private:
  void recompute();

  std::map<Category, uint64_t> counts_;
  double t_ = 0;
};

enum class OversampleMode {
  kRareBoost,  // r_c = max(1, round(sqrt(t / f_c))), replicates rare classes
  kLiteral,    // r_c = max(1, round(sqrt(f_c / t)))
};

int replication_factor(uint64_t f_c, double t, OversampleMode mode = OversampleMode::kRareBoost);

// Replicates every item r_c times in place: original order, replicas adjacent.
// Throws InvalidArgument when an item's category is missing from the histogram.
template <typename T>
std::vector<std::pair<T, Category>> oversample(std::span<const std::pair<T, Category>> dataset,
                                               const ClassHistogram& hist,
                                               OversampleMode mode = OversampleMode::kRareBoost);

}  // namespace vpg

#include "vpg/oversample_inl.h"
