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

#include "mmcoop/scene/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"
#include "mmcoop/rng.hpp"
#include "mmcoop/scene/observation.hpp"

namespace mmcoop::scene {

namespace {
constexpr int kScenarioVersion = 1;
}

std::optional<CellIndex> GridSpec::cell_of(double x, double y) const {
  const double fc = std::floor((x - origin_x()) / cell_size);
  const double fr = std::floor((y - origin_y()) / cell_size);
  if (!(fc >= 0 && fc < width && fr >= 0 && fr < height)) return std::nullopt;
  return CellIndex{static_cast<int>(fr), static_cast<int>(fc)};
}

void GridSpec::validate() const {
  if (height < 1 || width < 1 || channels < 1) throw ValidationError("grid: H, W, C must be >= 1");
  if (!(cell_size > 0) || !std::isfinite(cell_size)) throw ValidationError("grid: cell_size must be > 0");
}

BBox7 Scenario::object_at(std::size_t i, int t) const {
  const ObjectTrack& o = objects.at(i);
  BBox7 b = o.initial;
  const double elapsed = t * dt;
  b.x += o.velocity.x() * elapsed;
  b.y += o.velocity.y() * elapsed;
  return b;
}

std::vector<BBox7> Scenario::objects_at(int t) const {
  std::vector<BBox7> out;
  out.reserve(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) out.push_back(object_at(i, t));
  return out;
}

const AgentTrack& Scenario::agent(int agent_id) const {
  for (const AgentTrack& a : agents) {
    if (a.id == agent_id) return a;
  }
  throw ValidationError("scenario: unknown agent id " + std::to_string(agent_id));
}

Pose2D Scenario::agent_pose(int agent_id, int t) const {
  const AgentTrack& a = agent(agent_id);
  const double elapsed = t * dt;
  return {a.initial.x + a.velocity.x() * elapsed, a.initial.y + a.velocity.y() * elapsed,
          a.initial.heading};
}

void Scenario::validate() const {
  if (duration < 1) throw ValidationError("scenario: duration must be >= 1");
  if (!(dt > 0)) throw ValidationError("scenario: dt must be > 0");
  if (agents.empty()) throw ValidationError("scenario: at least one agent required");
  grid.validate();
  for (const ObjectTrack& o : objects) geometry::validate(o.initial);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    geometry::validate(agents[i].initial);
    if (!(agents[i].sensing_range > 0)) throw ValidationError("scenario: sensing range must be > 0");
    for (std::size_t j = 0; j < i; ++j) {
      if (agents[j].id == agents[i].id) throw ValidationError("scenario: duplicate agent id");
    }
  }
}

ScenarioConfig ScenarioConfig::from_preset(const std::string& name) {
  ScenarioConfig c;
  c.preset = name;
  if (name == "default") return c;
  if (name == "occlusion-heavy") {
    c.object_count = 24;
    c.require_ego_occlusion = true;
    return c;
  }
  if (name == "sparse") {
    c.object_count = 6;
    c.agent_count = 2;
    return c;
  }
  throw ValidationError("unknown scenario preset '" + name + "'");
}

void ScenarioConfig::validate() const {
  grid.validate();
  if (object_count < 0) throw ValidationError("scenario config: negative object count");
  if (agent_count < 1) throw ValidationError("scenario config: agent count must be >= 1");
  if (!(area_half_x > 0 && area_half_y > 0)) throw ValidationError("scenario config: empty area");
  if (speed_min < 0 || speed_max < speed_min) throw ValidationError("scenario config: bad speed range");
  if (!(object_length > 0 && object_width > 0 && object_height > 0)) {
    throw ValidationError("scenario config: object dimensions must be positive");
  }
  if (agent_ring_min < 0 || agent_ring_max < agent_ring_min) {
    throw ValidationError("scenario config: bad agent ring");
  }
  if (!(sensing_range > 0)) throw ValidationError("scenario config: sensing range must be > 0");
  if (duration < 1 || !(dt > 0)) throw ValidationError("scenario config: bad timing");
  if (max_retries < 1) throw ValidationError("scenario config: max_retries must be >= 1");
}

namespace {

bool ego_has_occluded_object(const Scenario& s) {
  const Pose2D ego = s.agent_pose(s.ego().id, 0);
  const std::vector<BBox7> world = s.objects_at(0);
  for (std::size_t i = 0; i < world.size(); ++i) {
    if ((world[i].center() - ego.position()).norm() > s.ego().sensing_range) continue;
    bool center_visible = true;
    visibility_fraction(ego.position(), world, i, &center_visible);
    if (!center_visible) return true;
  }
  return false;
}

std::optional<Scenario> try_generate(const ScenarioConfig& cfg, Rng& rng) {
  Scenario s;
  s.duration = cfg.duration;
  s.dt = cfg.dt;
  s.grid = cfg.grid;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  s.agents.push_back(AgentTrack{0, Pose2D{0, 0, 0}, Eigen::Vector2d::Zero(), cfg.sensing_range});
  // Collaborators sit on whole-cell positions so an exact pose projects grid
  // onto grid.
  for (int a = 1; a < cfg.agent_count; ++a) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double r = cfg.agent_ring_min + unit(rng) * (cfg.agent_ring_max - cfg.agent_ring_min);
      const double th = 2 * std::numbers::pi * unit(rng);
      const double x = std::round(r * std::cos(th) / cfg.grid.cell_size) * cfg.grid.cell_size;
      const double y = std::round(r * std::sin(th) / cfg.grid.cell_size) * cfg.grid.cell_size;
      bool ok = true;
      for (const AgentTrack& other : s.agents) {
        if (std::hypot(x - other.initial.x, y - other.initial.y) < 2 * cfg.agent_clearance) ok = false;
      }
      if (ok) {
        s.agents.push_back(AgentTrack{a, Pose2D{x, y, 0}, Eigen::Vector2d::Zero(), cfg.sensing_range});
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }

  for (int i = 0; i < cfg.object_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      BBox7 b;
      b.x = (2 * unit(rng) - 1) * cfg.area_half_x;
      b.y = (2 * unit(rng) - 1) * cfg.area_half_y;
      b.z = cfg.object_z;
      b.l = cfg.object_length;
      b.w = cfg.object_width;
      b.h = cfg.object_height;
      b.yaw = (2 * unit(rng) - 1) * cfg.yaw_jitter;
      b.score = 1.0;
      const double speed = cfg.speed_min + unit(rng) * (cfg.speed_max - cfg.speed_min);
      bool ok = true;
      for (const AgentTrack& a : s.agents) {
        if (std::hypot(b.x - a.initial.x, b.y - a.initial.y) < cfg.agent_clearance + 0.5 * b.l) ok = false;
      }
      for (std::size_t j = 0; ok && j < s.objects.size(); ++j) {
        if (geometry::rotated_iou_bev(b, s.objects[j].initial) > 0.0) ok = false;
      }
      if (ok) {
        s.objects.push_back(ObjectTrack{b, Eigen::Vector2d(speed, 0.0)});
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }
  if (cfg.require_ego_occlusion && !ego_has_occluded_object(s)) return std::nullopt;
  return s;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Rng rng = make_rng(seed, {0x5ce9e, static_cast<std::uint64_t>(attempt)});
    if (auto s = try_generate(cfg, rng)) return *s;
  }
  throw ValidationError("generate_scenario: placement infeasible after " +
                        std::to_string(cfg.max_retries) + " attempts");
}

// ---- structured text ---------------------------------------------------------

namespace {

using nlohmann::json;

json box_json(const BBox7& b) {
  return json{{"x", b.x}, {"y", b.y}, {"z", b.z}, {"l", b.l}, {"w", b.w},
              {"h", b.h}, {"yaw", b.yaw}, {"score", b.score}};
}

BBox7 box_from(const json& j) {
  return BBox7{j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
               j.at("l").get<double>(), j.at("w").get<double>(), j.at("h").get<double>(),
               j.at("yaw").get<double>(), j.at("score").get<double>()};
}

json vec_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
Eigen::Vector2d vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["version"] = kScenarioVersion;
  j["duration"] = s.duration;
  j["dt"] = s.dt;
  j["grid"] = json{{"height", s.grid.height},
                   {"width", s.grid.width},
                   {"cell_size", s.grid.cell_size},
                   {"channels", s.grid.channels}};
  j["objects"] = json::array();
  for (const ObjectTrack& o : s.objects) {
    j["objects"].push_back(json{{"box", box_json(o.initial)}, {"velocity", vec_json(o.velocity)}});
  }
  j["agents"] = json::array();
  for (const AgentTrack& a : s.agents) {
    j["agents"].push_back(json{{"id", a.id},
                               {"pose", json{{"x", a.initial.x}, {"y", a.initial.y}, {"heading", a.initial.heading}}},
                               {"velocity", vec_json(a.velocity)},
                               {"sensing_range", a.sensing_range}});
  }
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: malformed document: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kScenarioVersion) {
      throw ValidationError("scenario: unsupported version " + j.at("version").dump());
    }
    Scenario s;
    s.duration = j.at("duration").get<int>();
    s.dt = j.at("dt").get<double>();
    const json& g = j.at("grid");
    s.grid = GridSpec{g.at("height").get<int>(), g.at("width").get<int>(), g.at("cell_size").get<double>(),
                      g.at("channels").get<int>()};
    for (const json& o : j.at("objects")) {
      s.objects.push_back(ObjectTrack{box_from(o.at("box")), vec_from(o.at("velocity"))});
    }
    for (const json& a : j.at("agents")) {
      const json& p = a.at("pose");
      s.agents.push_back(AgentTrack{a.at("id").get<int>(),
                                    Pose2D{p.at("x").get<double>(), p.at("y").get<double>(),
                                           p.at("heading").get<double>()},
                                    vec_from(a.at("velocity")), a.at("sensing_range").get<double>()});
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << scenario_to_json(s) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

}  // namespace mmcoop::scene
