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

#include <string>

#include "vpg/errors.h"

namespace vpg {

template <typename T>
std::vector<std::pair<T, Category>> oversample(std::span<const std::pair<T, Category>> dataset,
                                               const ClassHistogram& hist, OversampleMode mode) {
  std::map<Category, int> factor;
  for (const auto& [c, n] : hist.counts()) factor[c] = replication_factor(n, hist.t(), mode);
  std::vector<std::pair<T, Category>> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset) {
    auto it = factor.find(item.second);
    if (it == factor.end()) {
      throw InvalidArgument("category '" + std::string(item.second.name()) + "' missing from histogram");
    }
    for (int r = 0; r < it->second; ++r) out.push_back(item);
  }
  return out;
}

}  // namespace vpg
