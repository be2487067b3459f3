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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmcoop/comms/message.hpp"
#include "mmcoop/error.hpp"
#include "mmcoop/harness/audit.hpp"
#include "mmcoop/harness/config.hpp"
#include "mmcoop/harness/metrics.hpp"
#include "mmcoop/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mmcoop;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "mmcoop_out";
  std::optional<std::string> mode;
  std::optional<double> keep_percent, tau, nms_iou, sigma_xy, sigma_heading, range;
  std::optional<int> delay_steps, threads;
  std::optional<std::string> params;
};

harness::AppConfig resolve(const GlobalFlags& f) {
  harness::AppConfig c;
  if (!f.config.empty()) c = harness::load_config(f.config);
  if (f.seed) c.first_seed = *f.seed;
  if (f.mode) {
    c.pipeline.mode = detection::parse_mode(*f.mode);
    c.axes.modes = {c.pipeline.mode};
  }
  if (f.keep_percent) {
    c.pipeline.cfg.keep_percent = *f.keep_percent;
    c.axes.keep_percent = {*f.keep_percent};
  }
  if (f.tau) c.pipeline.cfg.tau = *f.tau;
  if (f.nms_iou) c.pipeline.nms_iou = *f.nms_iou;
  if (f.delay_steps) {
    c.pipeline.channel.delay_steps = *f.delay_steps;
    c.axes.delay_steps = {*f.delay_steps};
  }
  if (f.sigma_xy) {
    c.pipeline.channel.sigma_xy = *f.sigma_xy;
    c.axes.sigma_xy = {*f.sigma_xy};
  }
  if (f.sigma_heading) {
    c.pipeline.channel.sigma_heading = *f.sigma_heading * std::numbers::pi / 180.0;
    c.axes.sigma_heading_deg = {*f.sigma_heading};
  }
  if (f.range) c.pipeline.channel.range = *f.range;
  if (f.threads) c.threads = *f.threads;
  if (f.params) c.params_path = *f.params;
  c.validate();
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  harness::write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

detection::ModelParams train_params(const harness::AppConfig& c, std::vector<double>* curve = nullptr) {
  detection::ModelParams p = detection::ModelParams::initial(c.scenario.grid, c.train.model_seed);
  const auto samples = harness::training_set(c.scenario, c.train);
  detection::PipelineConfig tp = c.pipeline;
  tp.mode = detection::FusionMode::MmCooper;
  std::vector<double> loss = detection::train_toy(p, samples, tp, c.train.options);
  if (curve) *curve = std::move(loss);
  return p;
}

detection::ModelParams obtain_params(const harness::AppConfig& c) {
  if (!c.params_path.empty()) {
    detection::ModelParams p = detection::ModelParams::initial(c.scenario.grid, c.train.model_seed);
    detection::load_params(p, read_bytes(c.params_path));
    return p;
  }
  std::cerr << "no --params given; training " << c.train.options.steps << " steps first\n";
  return train_params(c);
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json box_json(const geometry::BBox7& b) {
  return {{"x", b.x}, {"y", b.y}, {"z", b.z}, {"l", b.l}, {"w", b.w}, {"h", b.h}, {"yaw", b.yaw}, {"score", b.score}};
}

int cmd_generate(const GlobalFlags& f, int count) {
  const harness::AppConfig c = resolve(f);
  if (count < 1) throw ValidationError("generate: count must be >= 1");
  fs::create_directories(f.out);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = c.first_seed + static_cast<std::uint64_t>(i);
    const fs::path path = fs::path(f.out) / ("scenario_" + std::to_string(seed) + ".json");
    harness::write_file_atomic(path, scene::scenario_to_json(scene::generate_scenario(c.scenario, seed)));
    std::cout << path.string() << "\n";
  }
  return 0;
}

int cmd_run(const GlobalFlags& f, const std::string& scenario_path) {
  const harness::AppConfig c = resolve(f);
  const scene::Scenario s =
      scenario_path.empty() ? scene::generate_scenario(c.scenario, c.first_seed) : scene::load_scenario(scenario_path);
  const detection::ModelParams p = obtain_params(c);
  const int first = c.eval_frame < 0 ? 0 : c.eval_frame;
  const harness::RunResult r = harness::run_pipeline(s, p, c.pipeline, c.first_seed, first);
  nlohmann::json frames = nlohmann::json::array();
  std::cout << "mode " << detection::to_string(c.pipeline.mode) << "\n";
  for (const detection::FrameResult& fr : r.frames) {
    double volume = 0;
    int sent = 0;
    for (const detection::SenderStats& st : fr.senders) {
      if (st.sent_step < 0) continue;
      volume += st.volume;
      ++sent;
    }
    std::cout << "t=" << fr.timestep << " detections=" << fr.detections.size() << " truth=" << fr.truth.size()
              << " ap50=" << fixed(harness::average_precision(fr.detections, fr.truth, 0.5))
              << " ap70=" << fixed(harness::average_precision(fr.detections, fr.truth, 0.7))
              << " bytes=" << fr.bytes_sent << " mean_volume=" << fixed(sent ? volume / sent : 0.0) << "\n";
    nlohmann::json dets = nlohmann::json::array();
    for (const geometry::BBox7& b : fr.detections) dets.push_back(box_json(b));
    frames.push_back({{"t", fr.timestep}, {"bytes", fr.bytes_sent}, {"detections", dets}});
  }
  fs::create_directories(f.out);
  harness::write_file_atomic(fs::path(f.out) / "run.json", frames.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const GlobalFlags& f, std::optional<int> seeds) {
  harness::AppConfig c = resolve(f);
  if (seeds) c.seed_count = *seeds;
  const detection::ModelParams p = obtain_params(c);
  const harness::SweepConfig sc = c.sweep();
  const harness::SweepResult r = harness::run_sweep(sc, p);
  harness::emit_outputs(r, sc.axes, harness::config_to_json(c), f.out);
  for (const harness::SweepRow& row : r.aggregate) {
    std::cout << detection::to_string(row.mode) << " sigma_xy=" << fixed(row.sigma_xy)
              << " delay=" << row.delay_steps << " keep=" << fixed(row.keep_percent)
              << " ap50=" << fixed(row.summary.ap50) << " ap70=" << fixed(row.summary.ap70)
              << " V=" << fixed(row.summary.mean_volume) << "\n";
  }
  std::cout << "wrote " << (fs::path(f.out) / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_train(const GlobalFlags& f, std::optional<int> steps, std::optional<double> lr) {
  harness::AppConfig c = resolve(f);
  if (steps) c.train.options.steps = *steps;
  if (lr) c.train.options.lr = *lr;
  std::vector<double> curve;
  const detection::ModelParams p = train_params(c, &curve);
  fs::create_directories(f.out);
  write_bytes(fs::path(f.out) / "params.bin", detection::save_params(p));
  std::ostringstream os;
  os << "step,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) os << i << ',' << curve[i] << '\n';
  harness::write_file_atomic(fs::path(f.out) / "loss.csv", os.str());
  std::cout << "loss " << fixed(curve.front()) << " -> " << fixed(curve.back()) << " after "
            << c.train.options.steps << " steps\n";
  return 0;
}

int cmd_gradcheck(int seeds, double eps, double tol) {
  bool ok = true;
  for (const harness::AuditEntry& e : harness::gradcheck_audit(seeds, 0, eps)) {
    const bool pass = e.max_error <= tol;
    ok = ok && pass;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s max_rel_err=%.3e instances=%d worst_seed=%llu %s\n", e.op.c_str(),
                  e.max_error, e.instances, static_cast<unsigned long long>(e.worst_seed), pass ? "ok" : "FAIL");
    std::cout << buf;
  }
  return ok ? 0 : 2;
}

int cmd_dump(const GlobalFlags& f, int sender, int frame) {
  const harness::AppConfig c = resolve(f);
  const scene::Scenario s = scene::generate_scenario(c.scenario, c.first_seed);
  s.agent(sender);
  if (sender == s.ego().id) throw ValidationError("dump-message: sender must be a collaborator");
  if (frame < 0 || frame >= s.duration) throw ValidationError("dump-message: frame out of range");
  const detection::ModelParams p = obtain_params(c);
  numerics::Tape tape;
  numerics::ParamBinder bind(tape, false);
  const detection::OutgoingMessage m = detection::compose_message(bind, s, p, c.pipeline, sender, frame, c.first_seed);
  std::cout << comms::describe(m.message);
  std::cout << "wire_bytes " << comms::wire_size(m.message) << "\n";
  std::cout << "volume " << fixed(comms::measured_volume(m.message, s.grid.height, s.grid.width)) << "\n";
  fs::create_directories(f.out);
  write_bytes(fs::path(f.out) / "message.bin", comms::serialize(m.message));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmcoop: cooperative perception simulator"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--mode", g.mode, "none | late | intermediate | mmcooper");
  app.add_option("--keep-percent", g.keep_percent, "top-p keep percentage");
  app.add_option("--tau", g.tau, "Gumbel temperature");
  app.add_option("--nms-iou", g.nms_iou, "NMS IoU threshold");
  app.add_option("--delay-steps", g.delay_steps, "transmission delay in steps");
  app.add_option("--sigma-xy", g.sigma_xy, "pose noise std, meters");
  app.add_option("--sigma-heading", g.sigma_heading, "heading noise std, degrees");
  app.add_option("--range", g.range, "communication range, meters");
  app.add_option("--threads", g.threads, "sweep worker threads");
  app.add_option("--params", g.params, "trained parameter blob");

  int count = 1;
  auto* gen = app.add_subcommand("generate", "write scenario files");
  gen->add_option("--count", count, "number of scenarios");

  std::string scenario_path;
  auto* run = app.add_subcommand("run", "single pipeline run");
  run->add_option("--scenario", scenario_path, "scenario file (default: generated from --seed)");

  std::optional<int> seeds;
  auto* sweep = app.add_subcommand("sweep", "cross-product experiment");
  sweep->add_option("--seeds", seeds, "number of seeds");

  std::optional<int> steps;
  std::optional<double> lr;
  auto* train = app.add_subcommand("train", "toy training");
  train->add_option("--steps", steps, "gradient steps");
  train->add_option("--lr", lr, "learning rate");

  int audit_seeds = 100;
  double eps = 1e-3, tol = 1e-4;
  auto* grad = app.add_subcommand("gradcheck", "numeric gradient audit");
  grad->add_option("--seeds", audit_seeds, "instances per op");
  grad->add_option("--eps", eps, "finite-difference step");
  grad->add_option("--tol", tol, "max relative error");

  int sender = 1, frame = 0;
  auto* dump = app.add_subcommand("dump-message", "print one collaborator message");
  dump->add_option("--sender", sender, "collaborator id");
  dump->add_option("--frame", frame, "send step");

  for (CLI::App* sub : {gen, run, sweep, train, grad, dump}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_generate(g, count);
    if (*run) return cmd_run(g, scenario_path);
    if (*sweep) return cmd_sweep(g, seeds);
    if (*train) return cmd_train(g, steps, lr);
    if (*grad) {
      resolve(g);
      return cmd_gradcheck(audit_seeds, eps, tol);
    }
    if (*dump) return cmd_dump(g, sender, frame);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
