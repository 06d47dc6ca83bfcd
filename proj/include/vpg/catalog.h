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

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "vpg/types.h"

namespace vpg {

// Shoppable catalog item.
struct ProductEntry {
  ImageSignature signature;
  Embedding embedding;
  Category category;
  bool in_stock = true;
  bool legitimate_domain = true;
  bool safe = true;

  // Only eligible products are placed in the product index.
  bool eligible() const { return in_stock && legitimate_domain && safe; }

  friend bool operator==(const ProductEntry&, const ProductEntry&) = default;
};

nlohmann::json product_to_json(const ProductEntry& p);
ProductEntry product_from_json(const nlohmann::json& j);

std::vector<ProductEntry> read_products_jsonl(const std::filesystem::path& path);
void write_products_jsonl(const std::filesystem::path& path, std::span<const ProductEntry> products,
                          bool append = false);

}  // namespace vpg
