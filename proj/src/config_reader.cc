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

#include "vpg/config_reader.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "vpg/errors.h"

namespace vpg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ConfigReader ConfigReader::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path.string());
}

ConfigReader ConfigReader::from_string(std::string_view text, std::string origin) {
  ConfigReader reader;
  reader.origin_ = origin;
  size_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::string content = trim(line);
    if (content.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    auto eq = content.find('=');
    if (eq == std::string::npos) {
      reader.violations_.push_back(where + ": expected 'key = value', got '" + content + "'");
      continue;
    }
    std::string key = trim(std::string_view(content).substr(0, eq));
    std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) {
      reader.violations_.push_back(where + ": empty key");
      continue;
    }
    reader.values_[key] = Value{value, where, false};
  }
  return reader;
}

void ConfigReader::set(const std::string& key, const std::string& value) {
  values_[key] = Value{value, "flag", false};
}

void ConfigReader::set_assignment(std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    violations_.push_back("override '" + std::string(assignment) + "' is not key=value");
    return;
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const ConfigReader::Value* ConfigReader::take(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

int64_t ConfigReader::get_int(const std::string& key, int64_t def, int64_t min, int64_t max) {
  const Value* v = take(key);
  if (!v) return def;
  int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->text.data(), v->text.data() + v->text.size(), out);
  if (ec != std::errc() || ptr != v->text.data() + v->text.size()) {
    violations_.push_back(v->where + ": " + key + " must be an integer, got '" + v->text + "'");
    return def;
  }
  if (out < min || out > max) {
    violations_.push_back(v->where + ": " + key + " = " + v->text + " outside [" + std::to_string(min) + ", " +
                          std::to_string(max) + "]");
    return def;
  }
  return out;
}

uint64_t ConfigReader::get_u64(const std::string& key, uint64_t def) {
  const Value* v = take(key);
  if (!v) return def;
  uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->text.data(), v->text.data() + v->text.size(), out);
  if (ec != std::errc() || ptr != v->text.data() + v->text.size()) {
    violations_.push_back(v->where + ": " + key + " must be a non-negative integer, got '" + v->text + "'");
    return def;
  }
  return out;
}

double ConfigReader::get_double(const std::string& key, double def, double min, double max) {
  const Value* v = take(key);
  if (!v) return def;
  double out = 0;
  try {
    size_t used = 0;
    out = std::stod(v->text, &used);
    if (used != v->text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    violations_.push_back(v->where + ": " + key + " must be a number, got '" + v->text + "'");
    return def;
  }
  if (!(out >= min && out <= max)) {
    violations_.push_back(v->where + ": " + key + " = " + v->text + " outside [" + std::to_string(min) + ", " +
                          std::to_string(max) + "]");
    return def;
  }
  return out;
}

double ConfigReader::get_double_open(const std::string& key, double def, double min, double max) {
  const size_t before = violations_.size();
  double out = get_double(key, def, min, max);
  if (violations_.size() == before && has(key) && (out <= min || out >= max)) {
    violations_.push_back(values_.at(key).where + ": " + key + " must lie strictly between " +
                          std::to_string(min) + " and " + std::to_string(max));
    return def;
  }
  return out;
}

bool ConfigReader::get_bool(const std::string& key, bool def) {
  const Value* v = take(key);
  if (!v) return def;
  if (v->text == "true" || v->text == "1" || v->text == "yes") return true;
  if (v->text == "false" || v->text == "0" || v->text == "no") return false;
  violations_.push_back(v->where + ": " + key + " must be a boolean, got '" + v->text + "'");
  return def;
}

std::string ConfigReader::get_string(const std::string& key, std::string def) {
  const Value* v = take(key);
  return v ? v->text : def;
}

void ConfigReader::finish() {
  for (const auto& [key, v] : values_) {
    if (!v.used) violations_.push_back(v.where + ": unknown key '" + key + "'");
  }
  if (!violations_.empty()) throw ConfigError(violations_);
}

}  // namespace vpg
