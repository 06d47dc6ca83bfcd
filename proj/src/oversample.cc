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

#include "vpg/oversample.h"

#include <algorithm>
#include <cmath>

namespace vpg {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = q * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ClassHistogram::ClassHistogram(std::map<Category, uint64_t> counts) : counts_(std::move(counts)) { recompute(); }

void ClassHistogram::add(Category c, uint64_t n) {
  counts_[c] += n;
  recompute();
}

void ClassHistogram::set(Category c, uint64_t n) {
  counts_[c] = n;
  recompute();
}

uint64_t ClassHistogram::count(Category c) const {
  auto it = counts_.find(c);
  return it == counts_.end() ? 0 : it->second;
}

void ClassHistogram::recompute() {
  // Zero-count categories contribute no items and would drag t to 0.
  std::vector<double> v;
  for (const auto& [c, n] : counts_) {
    if (n > 0) v.push_back(static_cast<double>(n));
  }
  t_ = v.empty() ? 0.0 : percentile(std::move(v), 0.75);
}

int replication_factor(uint64_t f_c, double t, OversampleMode mode) {
  if (f_c == 0 || t <= 0) return 1;
  const double f = static_cast<double>(f_c);
  const double ratio = mode == OversampleMode::kRareBoost ? t / f : f / t;
  return std::max(1, static_cast<int>(std::lround(std::sqrt(ratio))));
}

}  // namespace vpg
