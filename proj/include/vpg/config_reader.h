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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vpg {

// Reader for "key = value" configuration files ('#' starts a comment). Typed
// getters consume keys and record range violations instead of throwing;
// finish() raises one ConfigError listing every violation plus any key no
// getter consumed.
class ConfigReader {
 public:
  ConfigReader() = default;
  static ConfigReader from_file(const std::filesystem::path& path);
  static ConfigReader from_string(std::string_view text, std::string origin = "<string>");

  // Flag overrides; later calls win.
  void set(const std::string& key, const std::string& value);
  // Parses "key=value" into set(); malformed text is recorded as a violation.
  void set_assignment(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  int64_t get_int(const std::string& key, int64_t def, int64_t min, int64_t max);
  uint64_t get_u64(const std::string& key, uint64_t def);
  double get_double(const std::string& key, double def, double min, double max);
  // Open interval variant, e.g. probabilities that must exclude the bounds.
  double get_double_open(const std::string& key, double def, double min, double max);
  bool get_bool(const std::string& key, bool def);
  std::string get_string(const std::string& key, std::string def);

  void add_violation(std::string message) { violations_.push_back(std::move(message)); }
  void finish();

 private:
  struct Value {
    std::string text;
    std::string where;
    bool used = false;
  };
  const Value* take(const std::string& key);

  std::map<std::string, Value> values_;
  std::vector<std::string> violations_;
  std::string origin_;
};

}  // namespace vpg
