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

#include "vpg/nms.h"

#include <algorithm>
#include <numeric>

#include "vpg/errors.h"

namespace vpg {

namespace {

Category argmax_class(const RawDetection& d) {
  if (d.scores.empty()) throw InvalidArgument("detection has no class scores");
  auto best = d.scores.begin();
  for (auto it = d.scores.begin(); it != d.scores.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::vector<DetectedObject> suppress(std::vector<DetectedObject> dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw InvalidArgument("iou_threshold must lie in (0, 1)");
  }
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& x = dets[a];
    const auto& y = dets[b];
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    if (x.box.area() != y.box.area()) return x.box.area() > y.box.area();
    return x.box < y.box;
  });
  std::vector<DetectedObject> kept;
  for (size_t i : order) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou(k.box, dets[i].box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(std::move(dets[i]));
  }
  return kept;
}

}  // namespace

std::vector<DetectedObject> class_agnostic_nms(std::span<const RawDetection> detections, double iou_threshold) {
  std::vector<DetectedObject> dets;
  dets.reserve(detections.size());
  for (const auto& d : detections) {
    dets.push_back(DetectedObject{d.box, argmax_class(d), d.confidence, d.embedding});
  }
  return suppress(std::move(dets), iou_threshold);
}

std::vector<DetectedObject> class_agnostic_nms(std::span<const DetectedObject> detections, double iou_threshold) {
  return suppress(std::vector<DetectedObject>(detections.begin(), detections.end()), iou_threshold);
}

}  // namespace vpg
