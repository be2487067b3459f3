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

#include "mmcoop/geometry/box.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop::geometry {

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> to_world(const Pose2<Scalar>& frame, const Eigen::Matrix<Scalar, 2, 1>& p) {
  const Scalar c = std::cos(frame.heading);
  const Scalar s = std::sin(frame.heading);
  return {frame.x + c * p.x() - s * p.y(), frame.y + s * p.x() + c * p.y()};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> to_local(const Pose2<Scalar>& frame, const Eigen::Matrix<Scalar, 2, 1>& p) {
  const Scalar c = std::cos(frame.heading);
  const Scalar s = std::sin(frame.heading);
  const Scalar dx = p.x() - frame.x;
  const Scalar dy = p.y() - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

/// Re-expresses a box given in the `src` frame in the `dst` frame.
template <typename Scalar>
Box7<Scalar> transform_box(const Box7<Scalar>& b, const Pose2<Scalar>& src, const Pose2<Scalar>& dst) {
  const auto local = to_local(dst, to_world(src, b.center()));
  Box7<Scalar> out = b;
  out.x = local.x();
  out.y = local.y();
  out.yaw = normalize_angle(b.yaw + src.heading - dst.heading);
  return out;
}

/// Pose perturbation with independent zero-mean Gaussians on x, y, heading.
/// Three standard normals are always drawn, so streams stay aligned across
/// different sigma values.
Pose2D sample_pose_noise(Rng& rng, double sigma_xy, double sigma_heading);

inline Pose2D perturb(const Pose2D& p, const Pose2D& noise) {
  return {p.x + noise.x, p.y + noise.y, normalize_angle(p.heading + noise.heading)};
}

}  // namespace mmcoop::geometry
