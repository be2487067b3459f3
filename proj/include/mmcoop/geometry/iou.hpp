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

#include <cstddef>
#include <span>
#include <vector>

#include "mmcoop/geometry/box.hpp"

namespace mmcoop::geometry {

using Point2 = Eigen::Vector2d;

/// Signed area of a simple polygon (positive when counter-clockwise).
double polygon_area(std::span<const Point2> poly);

/// Sutherland-Hodgman clip of `subject` against a convex counter-clockwise
/// `clip` polygon.
std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip);

/// Intersection-over-union of the BEV footprints; z and height are ignored.
/// Exactly symmetric in its arguments. Throws on zero-area boxes.
double rotated_iou_bev(const BBox7& a, const BBox7& b);

/// Greedy NMS: visit boxes by descending score (ties by lower index) and keep
/// a box iff its IoU with every kept box is <= iou_thresh. Returns kept
/// indices in visiting order.
std::vector<std::size_t> nms(std::span<const BBox7> boxes, double iou_thresh);

}  // namespace mmcoop::geometry
