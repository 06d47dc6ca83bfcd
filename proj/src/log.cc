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

#include "vpg/log.h"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <string>

#include "vpg/clock.h"
#include "vpg/errors.h"

namespace vpg {

namespace {

std::atomic<LogLevel> g_level{LogLevel::kInfo};

constexpr std::string_view kNames[] = {"debug", "info", "warn", "error", "off"};

}  // namespace

int64_t system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Clock system_clock() { return [] { return system_now_ms(); }; }

void set_log_level(LogLevel level) { g_level = level; }

LogLevel log_level() { return g_level; }

LogLevel log_level_from_name(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kNames[i] == name) return static_cast<LogLevel>(i);
  }
  throw InvalidArgument("unknown log level: " + std::string(name));
}

void log_event(LogLevel level, std::string_view event, nlohmann::json fields) {
  if (level < g_level.load()) return;
  nlohmann::json line = {{"ts_ms", system_now_ms()},
                         {"level", kNames[static_cast<int>(level)]},
                         {"event", event}};
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = v;
  }
  static std::mutex mu;
  const std::string text = line.dump() + "\n";
  std::lock_guard lock(mu);
  std::fputs(text.c_str(), stderr);
}

}  // namespace vpg
