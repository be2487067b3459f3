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

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace mmcoop::geometry {

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar normalize_angle(Scalar a) {
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Scalar r = std::remainder(a, two_pi);
  if (r <= -std::numbers::pi_v<Scalar>) r += two_pi;
  return r;
}

/// Planar pose: position in meters, heading in radians.
template <typename Scalar>
struct Pose2 {
  Scalar x = 0;
  Scalar y = 0;
  Scalar heading = 0;

  Eigen::Matrix<Scalar, 2, 1> position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Oriented 3D box: center, dimensions (length along yaw), yaw, and score.
template <typename Scalar>
struct Box7 {
  Scalar x = 0;
  Scalar y = 0;
  Scalar z = 0;
  Scalar l = 1;
  Scalar w = 1;
  Scalar h = 1;
  Scalar yaw = 0;
  Scalar score = 1;

  Eigen::Matrix<Scalar, 2, 1> center() const { return {x, y}; }
  Eigen::Matrix<Scalar, 7, 1> as_vector() const { return {x, y, z, l, w, h, yaw}; }
  Scalar bev_area() const { return l * w; }

  template <typename Other>
  Box7<Other> cast() const {
    return Box7<Other>{Other(x), Other(y), Other(z), Other(l), Other(w), Other(h), Other(yaw),
                       Other(score)};
  }

  friend bool operator==(const Box7&, const Box7&) = default;
};

using Pose2D = Pose2<double>;
using BBox7 = Box7<double>;

/// BEV footprint corners in counter-clockwise order.
template <typename Scalar>
std::array<Eigen::Matrix<Scalar, 2, 1>, 4> bev_corners(const Box7<Scalar>& b) {
  const Scalar c = std::cos(b.yaw);
  const Scalar s = std::sin(b.yaw);
  const Scalar hl = b.l / 2;
  const Scalar hw = b.w / 2;
  const Scalar lx[4] = {hl, -hl, -hl, hl};
  const Scalar ly[4] = {hw, hw, -hw, -hw};
  std::array<Eigen::Matrix<Scalar, 2, 1>, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.x + c * lx[i] - s * ly[i], b.y + s * lx[i] + c * ly[i]};
  }
  return out;
}

/// Throws ValidationError when dimensions are non-positive, the score is
/// outside [0, 1], or any field is non-finite.
void validate(const BBox7& b);
void validate(const Pose2D& p);

}  // namespace mmcoop::geometry
