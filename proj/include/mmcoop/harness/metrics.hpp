// Copyright 2026 The mmcoop Authors
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

#include "mmcoop/geometry/box.hpp"

namespace mmcoop::harness {

using geometry::BBox7;

enum class ApInterpolation { AllPoint, ElevenPoint };

/// Detections are ranked by score (ties to the lower index) and greedily
/// matched to the highest-IoU unmatched ground truth at IoU >= thresh.
/// No ground truth: 1 without detections, 0 with. No detection cap.
double average_precision(std::span<const BBox7> detections, std::span<const BBox7> truth, double iou_thresh,
                         ApInterpolation interp = ApInterpolation::AllPoint);

}  // namespace mmcoop::harness
