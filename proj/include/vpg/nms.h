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

#include <span>
#include <vector>

#include "vpg/synthetic_world.h"
#include "vpg/types.h"

namespace vpg {

// Greedy non-maximum suppression that ignores class labels. Candidates are
// visited by descending confidence (ties: larger box, then smaller box
// coordinates) and dropped when IoU with any kept box reaches the threshold.
// Survivors take the argmax class as their category.
std::vector<DetectedObject> class_agnostic_nms(std::span<const RawDetection> detections, double iou_threshold);

// Same suppression over already-labelled detections.
std::vector<DetectedObject> class_agnostic_nms(std::span<const DetectedObject> detections, double iou_threshold);

}  // namespace vpg
