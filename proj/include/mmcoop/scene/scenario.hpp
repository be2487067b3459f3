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
#include <optional>
#include <string>
#include <vector>

#include "mmcoop/geometry/box.hpp"
#include "mmcoop/numerics/tensor.hpp"

namespace mmcoop::scene {

using geometry::BBox7;
using geometry::Pose2D;

struct CellIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Agent-centered BEV grid. Columns run along +x, rows along +y; cell (r, c)
/// covers [origin_x + c*cell, origin_x + (c+1)*cell) in x.
struct GridSpec {
  int height = 64;
  int width = 64;
  double cell_size = 1.0;
  int channels = 16;

  int num_cells() const { return height * width; }
  double origin_x() const { return -0.5 * width * cell_size; }
  double origin_y() const { return -0.5 * height * cell_size; }
  int flat(int row, int col) const { return row * width + col; }
  bool contains(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }

  Eigen::Vector2d cell_center(int row, int col) const {
    return {origin_x() + (col + 0.5) * cell_size, origin_y() + (row + 0.5) * cell_size};
  }
  // Cell holding the point, or nullopt outside the grid.
  std::optional<CellIndex> cell_of(double x, double y) const;

  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct ObjectTrack {
  BBox7 initial;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // m/s

  friend bool operator==(const ObjectTrack&, const ObjectTrack&) = default;
};

struct AgentTrack {
  int id = 0;
  Pose2D initial;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // m/s
  double sensing_range = 50.0;

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

/// Timed world with constant-velocity objects and agents. Agent 0 of
/// `agents` is the ego.
struct Scenario {
  int duration = 3;  // timesteps
  double dt = 0.1;   // seconds per step
  GridSpec grid;
  std::vector<ObjectTrack> objects;
  std::vector<AgentTrack> agents;

  BBox7 object_at(std::size_t i, int t) const;
  std::vector<BBox7> objects_at(int t) const;
  Pose2D agent_pose(int agent_id, int t) const;
  const AgentTrack& agent(int agent_id) const;
  const AgentTrack& ego() const { return agents.front(); }

  void validate() const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct ScenarioConfig {
  std::string preset = "default";
  int object_count = 16;
  double area_half_x = 28.0;
  double area_half_y = 28.0;
  double speed_min = 4.0;  // m/s, objects travel along +x
  double speed_max = 10.0;
  double yaw_jitter = 0.05;  // radians
  double object_length = 4.5;
  double object_width = 2.0;
  double object_height = 1.6;
  double object_z = -1.0;
  int agent_count = 3;
  double agent_ring_min = 8.0;
  double agent_ring_max = 20.0;
  double sensing_range = 45.0;
  double agent_clearance = 3.5;
  int duration = 3;
  double dt = 0.1;
  bool require_ego_occlusion = false;
  int max_retries = 200;
  GridSpec grid;

  static ScenarioConfig from_preset(const std::string& name);
  void validate() const;
};

/// Deterministic under (cfg, seed). Throws ValidationError when object
/// placement stays infeasible after the configured retries.
Scenario generate_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

// Versioned structured-text form; doubles round-trip exactly.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace mmcoop::scene
