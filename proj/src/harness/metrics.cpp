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

#include "mmcoop/harness/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"

namespace mmcoop::harness {

double average_precision(std::span<const BBox7> detections, std::span<const BBox7> truth, double iou_thresh,
                         ApInterpolation interp) {
  if (!(iou_thresh > 0 && iou_thresh <= 1)) throw ValidationError("average_precision: IoU threshold must be in (0, 1]");
  if (truth.empty()) return detections.empty() ? 1.0 : 0.0;
  if (detections.empty()) return 0.0;

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

  std::vector<bool> taken(truth.size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const BBox7& d = detections[order[k]];
    double best = -1.0;
    std::ptrdiff_t match = -1;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (taken[g]) continue;
      const double iou = geometry::rotated_iou_bev(d, truth[g]);
      if (iou >= iou_thresh && iou > best) {
        best = iou;
        match = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (match >= 0) {
      taken[static_cast<std::size_t>(match)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(truth.size()));
  }
  // precision envelope
  for (std::size_t k = precision.size() - 1; k > 0; --k) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  if (interp == ApInterpolation::ElevenPoint) {
    double ap = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double r = i / 10.0;
      const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
      if (it != recall.end()) ap += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return ap / 11.0;
  }
  double ap = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev) * precision[k];
    prev = recall[k];
  }
  return ap;
}

}  // namespace mmcoop::harness
