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

#include "vpg/catalog.h"

#include <fstream>

#include "vpg/embedding_ops.h"
#include "vpg/errors.h"

namespace vpg {

nlohmann::json product_to_json(const ProductEntry& p) {
  return {{"signature", p.signature.to_hex()},
          {"embedding", embedding_to_base64(p.embedding)},
          {"category", p.category.name()},
          {"in_stock", p.in_stock},
          {"legitimate_domain", p.legitimate_domain},
          {"safe", p.safe}};
}

ProductEntry product_from_json(const nlohmann::json& j) {
  ProductEntry p;
  p.signature = ImageSignature::from_hex(j.at("signature").get<std::string>());
  p.embedding = embedding_from_base64(j.at("embedding").get<std::string>());
  p.category = Category::from_name(j.at("category").get<std::string>());
  p.in_stock = j.value("in_stock", true);
  p.legitimate_domain = j.value("legitimate_domain", true);
  p.safe = j.value("safe", true);
  return p;
}

std::vector<ProductEntry> read_products_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<ProductEntry> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(product_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

void write_products_jsonl(const std::filesystem::path& path, std::span<const ProductEntry> products, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  for (const auto& p : products) out << product_to_json(p).dump() << '\n';
}

}  // namespace vpg
