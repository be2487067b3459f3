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

#include "mmcoop/harness/config.hpp"

#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mmcoop/error.hpp"

namespace mmcoop::harness {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

json to_tree(const AppConfig& c) {
  const scene::ScenarioConfig& s = c.scenario;
  const detection::PipelineConfig& p = c.pipeline;
  json modes = json::array();
  for (FusionMode m : c.axes.modes) modes.push_back(detection::to_string(m));
  return json{
      {"scenario",
       {{"preset", s.preset},
        {"object_count", s.object_count},
        {"area_half_x", s.area_half_x},
        {"area_half_y", s.area_half_y},
        {"speed_min", s.speed_min},
        {"speed_max", s.speed_max},
        {"yaw_jitter", s.yaw_jitter},
        {"object_length", s.object_length},
        {"object_width", s.object_width},
        {"object_height", s.object_height},
        {"object_z", s.object_z},
        {"agent_count", s.agent_count},
        {"agent_ring_min", s.agent_ring_min},
        {"agent_ring_max", s.agent_ring_max},
        {"sensing_range", s.sensing_range},
        {"agent_clearance", s.agent_clearance},
        {"duration", s.duration},
        {"dt", s.dt},
        {"require_ego_occlusion", s.require_ego_occlusion},
        {"max_retries", s.max_retries},
        {"grid",
         {{"height", s.grid.height}, {"width", s.grid.width}, {"cell_size", s.grid.cell_size},
          {"channels", s.grid.channels}}}}},
      {"pipeline",
       {{"mode", detection::to_string(p.mode)},
        {"filter",
         {{"keep_percent", p.cfg.keep_percent},
          {"tau", p.cfg.tau},
          {"kernel", p.cfg.kernel},
          {"sigma", p.cfg.sigma},
          {"c_min", p.cfg.c_min},
          {"confidence_floor", p.cfg.confidence_floor}}},
        {"channel",
         {{"delay_steps", p.channel.delay_steps},
          {"sigma_xy", p.channel.sigma_xy},
          {"sigma_heading_deg", p.channel.sigma_heading / kDeg},
          {"range", p.channel.range}}},
        {"bfc",
         {{"enabled", p.bfc_enabled},
          {"score_thresh", p.bfc.score_thresh},
          {"max_xy_offset", p.bfc.max_xy_offset},
          {"max_yaw_offset", p.bfc.max_yaw_offset}}},
        {"mof", {{"window", p.mof.window}, {"offset_aware", p.mof.offset_aware}, {"multiscale", p.mof.multiscale}}},
        {"anchor", {{"l0", p.anchor.l0}, {"w0", p.anchor.w0}, {"h0", p.anchor.h0}, {"z0", p.anchor.z0}}},
        {"score_floor", p.score_floor},
        {"nms_iou", p.nms_iou},
        {"obs_noise", p.obs_noise},
        {"match_iou", p.match_iou}}},
      {"sweep",
       {{"modes", modes},
        {"sigma_xy", c.axes.sigma_xy},
        {"sigma_heading_deg", c.axes.sigma_heading_deg},
        {"delay_steps", c.axes.delay_steps},
        {"keep_percent", c.axes.keep_percent},
        {"first_seed", c.first_seed},
        {"seed_count", c.seed_count},
        {"eval_frame", c.eval_frame},
        {"threads", c.threads}}},
      {"train",
       {{"steps", c.train.options.steps},
        {"lr", c.train.options.lr},
        {"scenes", c.train.scenes},
        {"first_seed", c.train.first_seed},
        {"frame", c.train.frame},
        {"model_seed", c.train.model_seed}}},
      {"params", c.params_path}};
}

AppConfig from_tree(const json& j) {
  AppConfig c;
  const json& s = j.at("scenario");
  scene::ScenarioConfig& sc = c.scenario;
  sc.preset = s.at("preset").get<std::string>();
  sc.object_count = s.at("object_count").get<int>();
  sc.area_half_x = s.at("area_half_x").get<double>();
  sc.area_half_y = s.at("area_half_y").get<double>();
  sc.speed_min = s.at("speed_min").get<double>();
  sc.speed_max = s.at("speed_max").get<double>();
  sc.yaw_jitter = s.at("yaw_jitter").get<double>();
  sc.object_length = s.at("object_length").get<double>();
  sc.object_width = s.at("object_width").get<double>();
  sc.object_height = s.at("object_height").get<double>();
  sc.object_z = s.at("object_z").get<double>();
  sc.agent_count = s.at("agent_count").get<int>();
  sc.agent_ring_min = s.at("agent_ring_min").get<double>();
  sc.agent_ring_max = s.at("agent_ring_max").get<double>();
  sc.sensing_range = s.at("sensing_range").get<double>();
  sc.agent_clearance = s.at("agent_clearance").get<double>();
  sc.duration = s.at("duration").get<int>();
  sc.dt = s.at("dt").get<double>();
  sc.require_ego_occlusion = s.at("require_ego_occlusion").get<bool>();
  sc.max_retries = s.at("max_retries").get<int>();
  const json& g = s.at("grid");
  sc.grid.height = g.at("height").get<int>();
  sc.grid.width = g.at("width").get<int>();
  sc.grid.cell_size = g.at("cell_size").get<double>();
  sc.grid.channels = g.at("channels").get<int>();

  const json& p = j.at("pipeline");
  detection::PipelineConfig& pc = c.pipeline;
  pc.mode = detection::parse_mode(p.at("mode").get<std::string>());
  const json& f = p.at("filter");
  pc.cfg.keep_percent = f.at("keep_percent").get<double>();
  pc.cfg.tau = f.at("tau").get<double>();
  pc.cfg.kernel = f.at("kernel").get<int>();
  pc.cfg.sigma = f.at("sigma").get<double>();
  pc.cfg.c_min = f.at("c_min").get<double>();
  pc.cfg.confidence_floor = f.at("confidence_floor").get<double>();
  const json& ch = p.at("channel");
  pc.channel.delay_steps = ch.at("delay_steps").get<int>();
  pc.channel.sigma_xy = ch.at("sigma_xy").get<double>();
  pc.channel.sigma_heading = ch.at("sigma_heading_deg").get<double>() * kDeg;
  pc.channel.range = ch.at("range").get<double>();
  const json& b = p.at("bfc");
  pc.bfc_enabled = b.at("enabled").get<bool>();
  pc.bfc.score_thresh = b.at("score_thresh").get<double>();
  pc.bfc.max_xy_offset = b.at("max_xy_offset").get<double>();
  pc.bfc.max_yaw_offset = b.at("max_yaw_offset").get<double>();
  const json& m = p.at("mof");
  pc.mof.window = m.at("window").get<int>();
  pc.mof.offset_aware = m.at("offset_aware").get<bool>();
  pc.mof.multiscale = m.at("multiscale").get<bool>();
  const json& a = p.at("anchor");
  pc.anchor = {a.at("l0").get<double>(), a.at("w0").get<double>(), a.at("h0").get<double>(), a.at("z0").get<double>()};
  pc.score_floor = p.at("score_floor").get<double>();
  pc.nms_iou = p.at("nms_iou").get<double>();
  pc.obs_noise = p.at("obs_noise").get<double>();
  pc.match_iou = p.at("match_iou").get<double>();

  const json& w = j.at("sweep");
  c.axes.modes.clear();
  for (const json& v : w.at("modes")) c.axes.modes.push_back(detection::parse_mode(v.get<std::string>()));
  c.axes.sigma_xy = w.at("sigma_xy").get<std::vector<double>>();
  c.axes.sigma_heading_deg = w.at("sigma_heading_deg").get<std::vector<double>>();
  c.axes.delay_steps = w.at("delay_steps").get<std::vector<int>>();
  c.axes.keep_percent = w.at("keep_percent").get<std::vector<double>>();
  c.first_seed = w.at("first_seed").get<std::uint64_t>();
  c.seed_count = w.at("seed_count").get<int>();
  c.eval_frame = w.at("eval_frame").get<int>();
  c.threads = w.at("threads").get<int>();

  const json& t = j.at("train");
  c.train.options.steps = t.at("steps").get<int>();
  c.train.options.lr = t.at("lr").get<double>();
  c.train.scenes = t.at("scenes").get<int>();
  c.train.first_seed = t.at("first_seed").get<std::uint64_t>();
  c.train.frame = t.at("frame").get<int>();
  c.train.model_seed = t.at("model_seed").get<std::uint64_t>();
  c.params_path = j.at("params").get<std::string>();
  return c;
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ValidationError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ValidationError("config: unknown key '" + here + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, here);
    } else {
      slot = value;
    }
  }
}

}  // namespace

void AppConfig::validate() const { sweep().validate(); }

SweepConfig AppConfig::sweep() const {
  if (seed_count < 1) throw ValidationError("config: seed_count must be >= 1");
  SweepConfig s;
  s.scenario = scenario;
  s.pipeline = pipeline;
  s.axes = axes;
  for (int i = 0; i < seed_count; ++i) s.seeds.push_back(first_seed + static_cast<std::uint64_t>(i));
  s.eval_frame = eval_frame;
  s.threads = threads;
  return s;
}

std::string config_to_json(const AppConfig& c) { return to_tree(c).dump(2) + "\n"; }

AppConfig config_from_json(const std::string& text, const AppConfig& base) {
  try {
    const json user = json::parse(text);
    AppConfig start = base;
    if (user.contains("scenario") && user["scenario"].is_object() && user["scenario"].contains("preset")) {
      const scene::GridSpec grid = start.scenario.grid;
      start.scenario = scene::ScenarioConfig::from_preset(user["scenario"]["preset"].get<std::string>());
      start.scenario.grid = grid;
    }
    json tree = to_tree(start);
    merge(tree, user, "");
    AppConfig c = from_tree(tree);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

AppConfig load_config(const std::string& path, const AppConfig& base) {
  std::ifstream f(path);
  if (!f) throw ValidationError("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str(), base);
}

std::vector<detection::TrainSample> training_set(const scene::ScenarioConfig& scenario, const TrainConfig& t) {
  if (t.scenes < 1) throw ValidationError("train: scenes must be >= 1");
  if (t.frame < -1 || t.frame >= scenario.duration) throw ValidationError("train: frame out of range");
  std::vector<detection::TrainSample> out;
  for (int i = 0; i < t.scenes; ++i) {
    const std::uint64_t seed = t.first_seed + static_cast<std::uint64_t>(i);
    out.push_back({scene::generate_scenario(scenario, seed), t.frame < 0 ? scenario.duration - 1 : t.frame, seed});
  }
  return out;
}

}  // namespace mmcoop::harness
