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

#include "mmcoop/scene/observation.hpp"

#include <cmath>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/transform.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop::scene {

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_intersect(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
  const Eigen::Vector2d r = q - p;
  const Eigen::Vector2d s = b - a;
  const double denom = cross2(r, s);
  if (denom == 0.0) return false;  // parallel; a collinear graze cannot block alone
  const double t = cross2(a - p, s) / denom;
  const double u = cross2(a - p, r) / denom;
  return t >= 0 && t <= 1 && u >= 0 && u <= 1;
}

bool point_in_box(const Eigen::Vector2d& p, const BBox7& b) {
  const Eigen::Vector2d local = geometry::to_local(Pose2D{b.x, b.y, b.yaw}, p);
  return std::abs(local.x()) <= b.l / 2 && std::abs(local.y()) <= b.w / 2;
}

}  // namespace

bool segment_hits_box(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const BBox7& b) {
  if (point_in_box(p, b) || point_in_box(q, b)) return true;
  const auto c = geometry::bev_corners(b);
  for (int i = 0; i < 4; ++i) {
    if (segments_intersect(p, q, c[i], c[(i + 1) % 4])) return true;
  }
  return false;
}

double visibility_fraction(const Eigen::Vector2d& viewpoint, const std::vector<BBox7>& world,
                           std::size_t target, bool* center_visible) {
  const BBox7& tb = world.at(target);
  const auto corners = geometry::bev_corners(tb);
  Eigen::Vector2d probes[5] = {tb.center(), corners[0], corners[1], corners[2], corners[3]};
  int clear = 0;
  for (int k = 0; k < 5; ++k) {
    bool blocked = false;
    for (std::size_t j = 0; j < world.size() && !blocked; ++j) {
      if (j != target && segment_hits_box(viewpoint, probes[k], world[j])) blocked = true;
    }
    if (!blocked) ++clear;
    if (k == 0 && center_visible) *center_visible = !blocked;
  }
  return clear / 5.0;
}

Observation render_observation(const Scenario& s, int agent_id, int t, double noise_coeff,
                               std::uint64_t seed) {
  if (t < 0 || t >= s.duration) throw ValidationError("render_observation: timestep out of range");
  if (noise_coeff < 0) throw ValidationError("render_observation: negative noise coefficient");
  const AgentTrack& agent = s.agent(agent_id);
  Observation o;
  o.agent_id = agent_id;
  o.timestep = t;
  o.pose = s.agent_pose(agent_id, t);
  o.sensing_range = agent.sensing_range;

  Rng rng = make_rng(seed, {0x0b5e, static_cast<std::uint64_t>(agent_id), static_cast<std::uint64_t>(t)});
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<BBox7> world = s.objects_at(t);
  const Eigen::Vector2d eye = o.pose.position();
  for (std::size_t i = 0; i < world.size(); ++i) {
    const double dist = (world[i].center() - eye).norm();
    if (dist > agent.sensing_range) continue;
    bool visible = false;
    const double frac = visibility_fraction(eye, world, i, &visible);
    if (!visible) continue;
    BBox7 local = geometry::transform_box(world[i], Pose2D{}, o.pose);
    // Both normals are drawn regardless of sigma to keep streams aligned.
    const double sigma = noise_coeff * dist / agent.sensing_range;
    const double nx = normal(rng);
    const double ny = normal(rng);
    local.x += sigma * nx;
    local.y += sigma * ny;
    o.objects.push_back(ObservedObject{i, local, frac});
  }
  return o;
}

numerics::Tensor FeatureMap::to_tensor() const {
  numerics::Tensor t = numerics::Tensor::zeros({static_cast<std::size_t>(cells.cols()),
                                                static_cast<std::size_t>(grid.height),
                                                static_cast<std::size_t>(grid.width)});
  for (int c = 0; c < cells.cols(); ++c) {
    for (int r = 0; r < grid.height; ++r) {
      for (int k = 0; k < grid.width; ++k) {
        t.data()[(static_cast<std::size_t>(c) * grid.height + r) * grid.width + k] = at(c, r, k);
      }
    }
  }
  return t;
}

numerics::Matrix cell_descriptors(const Observation& o, const GridSpec& g) {
  g.validate();
  numerics::Matrix d = numerics::Matrix::Zero(g.num_cells(), kDescriptorSize);
  for (const ObservedObject& obj : o.objects) {
    const auto cell = g.cell_of(obj.box.x, obj.box.y);
    if (!cell) continue;
    const int i = g.flat(cell->row, cell->col);
    const Eigen::Vector2d ctr = g.cell_center(cell->row, cell->col);
    d(i, 1) += 1.0;
    d(i, 2) += (obj.box.x - ctr.x()) / g.cell_size;
    d(i, 3) += (obj.box.y - ctr.y()) / g.cell_size;
    d(i, 4) += std::cos(obj.box.yaw);
    d(i, 5) += std::sin(obj.box.yaw);
    d(i, 6) += obj.visibility;
  }
  const double range = o.sensing_range > 0 ? o.sensing_range : 1.0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const int i = g.flat(r, c);
      const double n = d(i, 1);
      if (n == 0) continue;
      d(i, 0) = 1.0;
      for (int k = 2; k <= 6; ++k) d(i, k) /= n;
      d(i, 7) = g.cell_center(r, c).norm() / range;
    }
  }
  return d;
}

EncodedObservation proxy_encode(const Observation& o, const GridSpec& g, const numerics::MlpParams& enc) {
  g.validate();
  enc.validate();
  if (enc.input_dim() != kDescriptorSize || enc.output_dim() != g.channels) {
    throw ValidationError("proxy_encode: encoder must map 8 -> " + std::to_string(g.channels));
  }
  EncodedObservation out;
  out.descriptors = cell_descriptors(o, g);
  out.features = FeatureMap{g, numerics::mlp_apply(enc, out.descriptors)};
  out.occupancy = Eigen::MatrixXi::Zero(g.height, g.width);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) out.occupancy(r, c) = out.descriptors(g.flat(r, c), 0) > 0 ? 1 : 0;
  }
  return out;
}

numerics::MlpParams default_encoder(const GridSpec& g) {
  return numerics::MlpParams::identity(kDescriptorSize, g.channels);
}

}  // namespace mmcoop::scene
