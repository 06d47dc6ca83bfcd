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

#include <atomic>
#include <cstdint>
#include <functional>

namespace vpg {

// Milliseconds since the Unix epoch. Components take a Clock instead of
// reading time themselves so expiry logic can be driven from tests.
using Clock = std::function<int64_t()>;

int64_t system_now_ms();
Clock system_clock();

class ManualClock {
 public:
  explicit ManualClock(int64_t start_ms = 0) : now_(start_ms) {}
  int64_t now() const { return now_.load(); }
  void advance_ms(int64_t ms) { now_ += ms; }
  void advance_seconds(int64_t s) { now_ += s * 1000; }
  Clock as_clock() {
    return [this] { return now(); };
  }

 private:
  std::atomic<int64_t> now_;
};

}  // namespace vpg
