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

#include "mmcoop/geometry/box.hpp"

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/transform.hpp"

namespace mmcoop::geometry {

void validate(const BBox7& b) {
  if (!b.as_vector().allFinite() || !std::isfinite(b.score)) {
    throw ValidationError("box: non-finite field");
  }
  if (!(b.l > 0 && b.w > 0 && b.h > 0)) throw ValidationError("box: dimensions must be positive");
  if (b.score < 0 || b.score > 1) throw ValidationError("box: score outside [0, 1]");
}

void validate(const Pose2D& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.heading)) {
    throw ValidationError("pose: non-finite field");
  }
}

Pose2D sample_pose_noise(Rng& rng, double sigma_xy, double sigma_heading) {
  if (sigma_xy < 0 || sigma_heading < 0) throw ValidationError("pose noise: negative sigma");
  std::normal_distribution<double> unit(0.0, 1.0);
  const double zx = unit(rng);
  const double zy = unit(rng);
  const double zh = unit(rng);
  return {sigma_xy * zx, sigma_xy * zy, sigma_heading * zh};
}

}  // namespace mmcoop::geometry
