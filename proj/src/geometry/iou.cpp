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

#include "mmcoop/geometry/iou.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "mmcoop/error.hpp"

namespace mmcoop::geometry {

double polygon_area(std::span<const Point2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % poly.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

namespace {

// > 0 when p is left of the directed edge a -> b.
double side(const Point2& a, const Point2& b, const Point2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

Point2 edge_intersection(const Point2& p, const Point2& q, double sp, double sq) {
  const double t = sp / (sp - sq);
  return p + t * (q - p);
}

// Lexicographic order on the fields that define the footprint; used to make
// the IoU evaluation order canonical.
bool footprint_less(const BBox7& a, const BBox7& b) {
  return std::tie(a.x, a.y, a.l, a.w, a.yaw) < std::tie(b.x, b.y, b.l, b.w, b.yaw);
}

}  // namespace

std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip) {
  std::vector<Point2> out(subject.begin(), subject.end());
  std::vector<Point2> input;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point2& a = clip[e];
    const Point2& b = clip[(e + 1) % clip.size()];
    input.swap(out);
    out.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const double s_cur = side(a, b, cur);
      const double s_prev = side(a, b, prev);
      if (s_cur >= 0) {
        if (s_prev < 0) out.push_back(edge_intersection(prev, cur, s_prev, s_cur));
        out.push_back(cur);
      } else if (s_prev >= 0) {
        out.push_back(edge_intersection(prev, cur, s_prev, s_cur));
      }
    }
  }
  return out;
}

double rotated_iou_bev(const BBox7& a_in, const BBox7& b_in) {
  const double area_a = a_in.l * a_in.w;
  const double area_b = b_in.l * b_in.w;
  if (!(area_a > 0) || !(area_b > 0)) throw ValidationError("rotated_iou_bev: degenerate box");

  const bool swap = footprint_less(b_in, a_in);
  const BBox7& a = swap ? b_in : a_in;
  const BBox7& b = swap ? a_in : b_in;

  // Circumscribed circles that do not touch cannot overlap.
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  if ((a.center() - b.center()).norm() > ra + rb) return 0.0;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const std::vector<Point2> poly = clip_convex(ca, cb);
  const double inter = std::max(0.0, polygon_area(poly));
  const double uni = area_a + area_b - inter;
  if (!(uni > 0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms(std::span<const BBox7> boxes, double iou_thresh) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return boxes[i].score > boxes[j].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (rotated_iou_bev(boxes[i], boxes[k]) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace mmcoop::geometry
