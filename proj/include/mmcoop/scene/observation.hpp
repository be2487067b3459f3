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

#include <cstdint>
#include <vector>

#include "mmcoop/numerics/mlp.hpp"
#include "mmcoop/scene/scenario.hpp"

namespace mmcoop::scene {

struct ObservedObject {
  std::size_t object_index = 0;
  BBox7 box;                // agent frame, center jittered
  double visibility = 1.0;  // fraction of unblocked sample rays
};

struct Observation {
  int agent_id = 0;
  int timestep = 0;
  Pose2D pose;
  double sensing_range = 0.0;
  std::vector<ObservedObject> objects;
};

/// True when the segment p -> q crosses the BEV footprint of `b`.
bool segment_hits_box(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const BBox7& b);

/// Visibility of object `target` from `viewpoint` among `world` boxes: the
/// object is visible iff its center ray is unblocked; the returned fraction
/// counts unblocked rays to center and the four corners.
double visibility_fraction(const Eigen::Vector2d& viewpoint, const std::vector<BBox7>& world,
                           std::size_t target, bool* center_visible);

/// Objects within sensing range whose center ray is unblocked, expressed in
/// the agent frame. Center jitter has sigma = noise_coeff * distance / range.
Observation render_observation(const Scenario& s, int agent_id, int t, double noise_coeff,
                               std::uint64_t seed);

constexpr int kDescriptorSize = 8;

/// Dense feature map of C channels over an H x W grid, stored as
/// (H*W) x C with cells in row-major order.
struct FeatureMap {
  GridSpec grid;
  numerics::Matrix cells;

  double at(int channel, int row, int col) const { return cells(grid.flat(row, col), channel); }
  // C x H x W view.
  numerics::Tensor to_tensor() const;
};

struct EncodedObservation {
  FeatureMap features;
  numerics::Matrix descriptors;   // (H*W) x 8
  Eigen::MatrixXi occupancy;      // H x W, 1 where an observed center lies
};

/// Per-cell descriptor: occupancy, count, mean center offset (2, cell units),
/// mean (cos yaw, sin yaw), mean visibility, cell distance / sensing range.
/// Empty cells get the zero descriptor.
numerics::Matrix cell_descriptors(const Observation& o, const GridSpec& g);

/// Maps every cell descriptor through `enc` to C channels.
EncodedObservation proxy_encode(const Observation& o, const GridSpec& g, const numerics::MlpParams& enc);

/// Default encoder: the descriptor copied into the first 8 channels.
numerics::MlpParams default_encoder(const GridSpec& g);

}  // namespace mmcoop::scene
