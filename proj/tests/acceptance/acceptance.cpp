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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mmcoop/comms/channel.hpp"
#include "mmcoop/comms/message.hpp"
#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"
#include "mmcoop/harness/audit.hpp"
#include "mmcoop/harness/config.hpp"
#include "mmcoop/harness/metrics.hpp"
#include "mmcoop/harness/pipeline.hpp"
#include "support.hpp"

using namespace mmcoop;
using geometry::BBox7;
using testing::uniform;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---- criterion 1

Outcome gradient_audit() {
  const auto t0 = Clock::now();
  const auto entries = harness::gradcheck_audit(100, 0, 1e-3);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  double worst = 0;
  std::string worst_op;
  for (const auto& e : entries) {
    if (e.max_error >= worst) {
      worst = e.max_error;
      worst_op = e.op;
    }
  }
  Outcome o;
  o.pass = worst <= 1e-4 && secs < 60.0 && entries.size() >= 12;
  o.detail = fmt("%.0f ops x 100 seeds, max rel err %.2e", static_cast<double>(entries.size()), worst) + " (" +
             worst_op + ")" + fmt(", %.1fs", secs);
  return o;
}

// ---- criterion 2

BBox7 random_box(Rng& rng, double extent) {
  return BBox7{uniform(rng, -extent, extent), uniform(rng, -extent, extent), 0.0,
               uniform(rng, 0.5, 5.0),        uniform(rng, 0.5, 3.0),        1.0,
               uniform(rng, -std::numbers::pi, std::numbers::pi), uniform(rng, 0, 1)};
}

bool inside(const BBox7& b, double px, double py) {
  const double dx = px - b.x, dy = py - b.y;
  const double lx = std::cos(b.yaw) * dx + std::sin(b.yaw) * dy;
  const double ly = -std::sin(b.yaw) * dx + std::cos(b.yaw) * dy;
  return std::abs(lx) <= b.l / 2 && std::abs(ly) <= b.w / 2;
}

double monte_carlo_iou(const BBox7& a, const BBox7& b, Rng& rng, int samples) {
  double lo_x = 1e9, lo_y = 1e9, hi_x = -1e9, hi_y = -1e9;
  for (const BBox7* box : {&a, &b}) {
    const double r = 0.5 * std::hypot(box->l, box->w);
    lo_x = std::min(lo_x, box->x - r);
    hi_x = std::max(hi_x, box->x + r);
    lo_y = std::min(lo_y, box->y - r);
    hi_y = std::max(hi_y, box->y + r);
  }
  int both = 0, either = 0;
  for (int i = 0; i < samples; ++i) {
    const double px = uniform(rng, lo_x, hi_x), py = uniform(rng, lo_y, hi_y);
    const bool ia = inside(a, px, py), ib = inside(b, px, py);
    both += ia && ib;
    either += ia || ib;
  }
  return either ? static_cast<double>(both) / either : 0.0;
}

std::vector<std::size_t> brute_nms(const std::vector<BBox7>& boxes, double thresh) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || boxes[i].score > boxes[best].score)) best = i;
    }
    if (best == boxes.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && geometry::rotated_iou_bev(boxes[i], boxes[best]) > thresh) alive[i] = false;
    }
  }
  return kept;
}

BBox7 unit(double x, double score = 1.0) { return BBox7{x, 0, 0, 1, 1, 1, 0, score}; }

struct ApCase {
  std::vector<BBox7> dets, truth;
  double thresh;
  harness::ApInterpolation interp;
  double expected;
};

// Unit squares far apart overlap nothing; x offsets of 0.5 give IoU 1/3.
std::vector<ApCase> ap_cases() {
  using I = harness::ApInterpolation;
  const BBox7 a = unit(0), b = unit(10), c = unit(20), d = unit(30);
  const BBox7 miss = unit(100);
  auto s = [](BBox7 x, double score) {
    x.score = score;
    return x;
  };
  return {
      {{s(a, .9), s(b, .8)}, {a, b}, .5, I::AllPoint, 1.0},
      {{}, {a, b}, .5, I::AllPoint, 0.0},
      {{}, {}, .5, I::AllPoint, 1.0},
      {{s(a, .9)}, {}, .5, I::AllPoint, 0.0},
      {{s(a, .9), s(miss, .8)}, {a, b}, .5, I::AllPoint, 0.5},
      {{s(miss, .9), s(a, .8)}, {a, b}, .5, I::AllPoint, 0.25},
      {{s(a, .9), s(miss, .8), s(b, .7)}, {a, b}, .5, I::AllPoint, 0.5 + 0.5 * 2.0 / 3.0},
      {{s(a, .9), s(a, .8)}, {a}, .5, I::AllPoint, 1.0},
      {{s(a, .4), s(b, .3), s(c, .2), s(d, .1)}, {a, b, c, d}, .5, I::AllPoint, 1.0},
      {{s(a, .9), s(miss, .8), s(b, .7), s(miss, .6), s(c, .5)}, {a, b, c, d}, .5, I::AllPoint,
       0.25 + 0.25 * 2.0 / 3.0 + 0.25 * 0.6},
      {{s(unit(0.5), .9)}, {a}, .3, I::AllPoint, 1.0},
      {{s(unit(0.5), .9)}, {a}, .5, I::AllPoint, 0.0},
      {{s(miss, .5), s(a, .5)}, {a}, .5, I::AllPoint, 0.5},
      {{s(a, .5), s(miss, .5)}, {a}, .5, I::AllPoint, 1.0},
      {{s(a, .9)}, {a, b, c}, .5, I::AllPoint, 1.0 / 3.0},
      {{s(miss, .9), s(miss, .8), s(a, .7)}, {a, b, c}, .5, I::AllPoint, 1.0 / 9.0},
      {{s(a, .9), s(miss, .8), s(miss, .7), s(b, .6)}, {a, b}, .5, I::AllPoint, 0.75},
      // the first detection must take the closer ground truth or the second becomes a false positive
      {{s(unit(0.5), .9), s(unit(0.0), .8)}, {unit(0.0), unit(0.6)}, .3, I::AllPoint, 1.0},
      {{s(a, .9), s(miss, .8)}, {a, b}, .5, I::ElevenPoint, 6.0 / 11.0},
      {{s(a, .9), s(b, .8)}, {a, b}, .5, I::ElevenPoint, 1.0},
  };
}

Outcome geometry_oracles() {
  const auto t0 = Clock::now();
  Rng rng(2024), mc(2025);
  double worst_iou = 0;
  for (int i = 0; i < 500; ++i) {
    const BBox7 a = random_box(rng, 1.5), b = random_box(rng, 1.5);
    worst_iou = std::max(worst_iou, std::abs(geometry::rotated_iou_bev(a, b) - monte_carlo_iou(a, b, mc, 100000)));
  }
  int nms_ok = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<BBox7> boxes(5 + static_cast<int>(rng() % 30));
    for (BBox7& b : boxes) b = random_box(rng, 4.0);
    const double thresh = uniform(rng, 0.0, 0.7);
    nms_ok += geometry::nms(boxes, thresh) == brute_nms(boxes, thresh);
  }
  int ap_ok = 0;
  const auto cases = ap_cases();
  for (const ApCase& c : cases) {
    ap_ok += std::abs(harness::average_precision(c.dets, c.truth, c.thresh, c.interp) - c.expected) <= 1e-12;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  Outcome o;
  o.pass = worst_iou <= 0.02 && nms_ok == 200 && ap_ok == static_cast<int>(cases.size()) && cases.size() == 20 &&
           secs < 60.0;
  o.detail = fmt("IoU vs Monte Carlo max diff %.4f on 500 pairs, NMS %.0f/200, AP %.0f/%.0f", worst_iou, nms_ok,
                 ap_ok, static_cast<double>(cases.size())) +
             fmt(", %.1fs", secs);
  return o;
}

// ---- criterion 3

Outcome bandwidth() {
  const double v28 = comms::bandwidth_volume(0.0, 64, 64, 16, 1);
  const double v84 = comms::bandwidth_volume(0.0, 64, 64, 16, 3);
  const double vfull = comms::bandwidth_volume(1.0, 100, 352, 64, 0);
  const double e = std::max({std::abs(v28 - std::log2(28.0)), std::abs(v84 - std::log2(84.0)),
                             std::abs(vfull - std::log2(9011200.0))});
  int points = 0, violations = 0;
  constexpr int kRatios = 40, kBoxes = 25;
  std::vector<double> prev_col(kBoxes, -1.0);
  for (int i = 0; i < kRatios; ++i) {
    double prev = -1.0;
    for (int nb = 0; nb < kBoxes; ++nb) {
      const double v = comms::bandwidth_volume(i / (kRatios - 1.0), 64, 64, 16, static_cast<std::size_t>(nb) * 3);
      ++points;
      violations += v < prev || v < prev_col[nb];
      prev = v;
      prev_col[nb] = v;
    }
  }
  Outcome o;
  o.pass = e <= 1e-9 && violations == 0 && points == 1000;
  o.detail = fmt("hand values max err %.1e, monotonicity violations %.0f over %.0f points", e, violations, points);
  return o;
}

// ---- criterion 4

Outcome routing() {
  Rng rng(404);
  int exclusive_bad = 0, card_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 3 + static_cast<int>(rng() % 8), w = 3 + static_cast<int>(rng() % 8), c = 1 + static_cast<int>(rng() % 4);
    const scene::FeatureMap f{scene::GridSpec{h, w, 1.0, c}, testing::random_matrix(rng, h * w, c, -2, 2)};
    const Eigen::Index dims[] = {c, 1};
    const cfg::ConfidenceHeads heads{
        numerics::MlpParams::xavier(dims, numerics::Activation::Identity, numerics::Activation::Identity, rng, 3.0),
        numerics::MlpParams::xavier(dims, numerics::Activation::Identity, numerics::Activation::Identity, rng, 3.0)};
    cfg::CfgConfig cc;
    cc.keep_percent = uniform(rng, 0, 100);
    cc.tau = uniform(rng, 0.2, 3.0);
    cc.c_min = trial % 2 ? 0.0 : uniform(rng, 0, 0.5);
    numerics::Tape tape;
    numerics::ParamBinder bind(tape, false);
    const cfg::StageFilter s = cfg::generate_filter(bind, heads, f, cc, rng);
    exclusive_bad += !s.final_f.cwiseProduct(s.final_b).isZero(0);
    const double want = std::ceil(cc.keep_percent * h * w / 100.0);
    card_bad += s.top_f.sum() != want || s.top_b.sum() != want;
  }

  double worst = 0;
  constexpr int kDraws = 10000;
  for (double tau : {0.5, 1.0, 2.0}) {
    numerics::Tape tape;
    const numerics::Matrix a = testing::random_matrix(rng, 8, 1, 0.05, 1.0);
    const numerics::Matrix b = testing::random_matrix(rng, 8, 1, 0.05, 1.0);
    const numerics::Var cf = tape.constant(a), cb = tape.constant(b);
    numerics::Matrix count = numerics::Matrix::Zero(8, 1);
    for (int i = 0; i < kDraws; ++i) count += cfg::gumbel_stage_select(cf, cb, tau, rng).hard.col(0);
    for (int i = 0; i < 8; ++i) {
      const double la = std::log(a(i)), lb = std::log(b(i)), m = std::max(la, lb);
      const double softmax = std::exp(la - m) / (std::exp(la - m) + std::exp(lb - m));
      worst = std::max(worst, std::abs(count(i) / kDraws - softmax));
    }
  }
  Outcome o;
  o.pass = exclusive_bad == 0 && card_bad == 0 && worst <= 0.02;
  o.detail = fmt("exclusivity failures %.0f/1000, top-p cardinality failures %.0f/1000, gumbel max freq err %.4f",
                 exclusive_bad, card_bad, worst);
  return o;
}

// ---- criteria 5 to 8 share the trained parameters

struct Trained {
  harness::AppConfig app;
  detection::ModelParams params;
  std::vector<double> curve;
  double seconds = 0;
};

Trained train_default() {
  Trained t;
  t.app.scenario = scene::ScenarioConfig::from_preset("occlusion-heavy");
  const auto t0 = Clock::now();
  t.params = detection::ModelParams::initial(t.app.scenario.grid, t.app.train.model_seed);
  const auto samples = harness::training_set(t.app.scenario, t.app.train);
  t.curve = detection::train_toy(t.params, samples, t.app.pipeline, t.app.train.options);
  t.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return t;
}

harness::SweepConfig eval_sweep(const Trained& t) {
  harness::SweepConfig sc = t.app.sweep();
  sc.seeds.clear();
  for (std::uint64_t k = 0; k < 100; ++k) sc.seeds.push_back(k);
  sc.threads = 1;
  return sc;
}

double ap_of(const harness::SweepResult& r, std::size_t cell) { return r.aggregate.at(cell).summary.ap50; }

struct ModeResult {
  double none = 0, late = 0, inter = 0, mm = 0;
  double v_inter = 0, v_mm = 0;
  double seconds = 0;
};

ModeResult mode_comparison(const Trained& t) {
  harness::SweepConfig sc = eval_sweep(t);
  sc.axes.modes = {harness::FusionMode::NoFusion, harness::FusionMode::LateOnly,
                   harness::FusionMode::IntermediateOnly, harness::FusionMode::MmCooper};
  const auto t0 = Clock::now();
  const harness::SweepResult r = harness::run_sweep(sc, t.params);
  ModeResult m;
  m.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.none = ap_of(r, 0);
  m.late = ap_of(r, 1);
  m.inter = ap_of(r, 2);
  m.mm = ap_of(r, 3);
  m.v_inter = r.aggregate[2].summary.mean_volume;
  m.v_mm = r.aggregate[3].summary.mean_volume;
  return m;
}

Outcome table_trend(const ModeResult& m, const Trained& t) {
  const double secs = m.seconds + t.seconds;
  Outcome o;
  o.pass = m.mm >= m.inter && m.inter >= m.none && m.mm - m.none >= 0.05 && secs < 600.0;
  o.detail = fmt("AP@0.5 none %.4f, intermediate %.4f, mmcooper %.4f", m.none, m.inter, m.mm) +
             fmt(" (late %.4f), gain %.4f, %.0fs with training", m.late, m.mm - m.none, secs);
  return o;
}

Outcome volume_trend(const ModeResult& m, bool trend_holds) {
  Outcome o;
  o.pass = m.v_mm <= m.v_inter - 4.0 && trend_holds;
  o.detail = fmt("mean V mmcooper %.3f vs intermediate %.3f (margin %.3f bits)", m.v_mm, m.v_inter,
                 m.v_inter - m.v_mm) +
             (trend_holds ? "" : ", ordering criterion failed");
  return o;
}

Outcome robustness(const Trained& t) {
  harness::SweepConfig sigma = eval_sweep(t);
  sigma.axes.sigma_xy = {0.0, 0.2, 0.4};
  const harness::SweepResult rs = harness::run_sweep(sigma, t.params);
  const double s0 = ap_of(rs, 0), s2 = ap_of(rs, 1), s4 = ap_of(rs, 2);

  harness::SweepConfig delay = eval_sweep(t);
  delay.axes.delay_steps = {0, 1, 2};
  const harness::SweepResult rd = harness::run_sweep(delay, t.params);
  const double d0 = ap_of(rd, 0), d1 = ap_of(rd, 1), d2 = ap_of(rd, 2);

  harness::SweepConfig noisy = eval_sweep(t);
  noisy.axes.sigma_xy = {0.4};
  harness::SweepConfig no_bfc = noisy;
  no_bfc.pipeline.bfc_enabled = false;
  harness::SweepConfig no_mof = noisy;
  no_mof.pipeline.mof = fusion::MofOptions{1, false, false};
  const double with = ap_of(harness::run_sweep(noisy, t.params), 0);
  const double without_bfc = ap_of(harness::run_sweep(no_bfc, t.params), 0);
  const double without_mof = ap_of(harness::run_sweep(no_mof, t.params), 0);

  constexpr double kSlack = 0.02;
  const bool sigma_ok = s2 <= s0 + kSlack && s4 <= s2 + kSlack;
  const bool delay_ok = d1 <= d0 + kSlack && d2 <= d1 + kSlack;
  Outcome o;
  o.pass = sigma_ok && delay_ok && with > without_bfc && with > without_mof;
  o.detail = fmt("sigma 0/.2/.4: %.4f %.4f %.4f", s0, s2, s4) + fmt("; delay 0/1/2: %.4f %.4f %.4f", d0, d1, d2) +
             fmt("; at sigma .4 full %.4f, no BFC %.4f, no MOF %.4f", with, without_bfc, without_mof);
  return o;
}

Outcome training(const Trained& t) {
  const detection::ModelParams fresh = detection::ModelParams::initial(t.app.scenario.grid, t.app.train.model_seed);
  detection::ModelParams again = fresh;
  const auto samples = harness::training_set(t.app.scenario, t.app.train);
  const std::vector<double> repeat = detection::train_toy(again, samples, t.app.pipeline, t.app.train.options);
  const bool bitwise = repeat == t.curve && detection::save_params(again) == detection::save_params(t.params);
  const double ratio = t.curve.back() / t.curve.front();
  Outcome o;
  o.pass = ratio <= 0.5 && bitwise && t.curve.size() == 201;
  o.detail = fmt("loss %.4f -> %.4f (ratio %.3f) over 200 steps, ", t.curve.front(), t.curve.back(), ratio) +
             (bitwise ? "curve bitwise reproducible" : "curve NOT reproducible");
  return o;
}

// ---- criterion 9

comms::CoopMessage random_message(Rng& rng, std::uint32_t channels) {
  comms::CoopMessage m;
  m.sender = static_cast<std::uint16_t>(rng() & 0xffff);
  m.timestep = static_cast<std::uint32_t>(rng());
  m.pose = geometry::Pose2D{uniform(rng, -100, 100), uniform(rng, -100, 100), uniform(rng, -3, 3)};
  m.channels = channels;
  const int cells = static_cast<int>(rng() % 20);
  for (int i = 0; i < cells; ++i) {
    comms::FeatureCell f{static_cast<std::uint16_t>(i * 5 + rng() % 5), static_cast<std::uint16_t>(rng() % 512), {}};
    for (std::uint32_t c = 0; c < channels; ++c) f.values.push_back(static_cast<float>(uniform(rng, -5, 5)));
    m.features.push_back(f);
  }
  const int boxes = static_cast<int>(rng() % 8);
  for (int i = 0; i < boxes; ++i) {
    comms::WireBox b;
    for (float* v : {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.yaw, &b.score}) *v = static_cast<float>(uniform(rng, -9, 9));
    m.boxes.push_back(b);
  }
  return m;
}

// Every damaged stream must throw a WireError; returning a message counts as a failure.
bool rejects(const std::vector<std::uint8_t>& bytes, std::uint32_t channels) {
  try {
    comms::deserialize(bytes, channels);
  } catch (const comms::WireError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome wire_format() {
  Rng rng(909);
  int round_trip_bad = 0, damaged = 0, accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::uint32_t channels = 1 + static_cast<std::uint32_t>(rng() % 16);
    const comms::CoopMessage m = random_message(rng, channels);
    const std::vector<std::uint8_t> bytes = comms::serialize(m);
    const comms::CoopMessage back = comms::deserialize(bytes, channels);
    round_trip_bad += !(back == m) || comms::serialize(back) != bytes;

    const std::size_t cut = rng() % bytes.size();
    ++damaged;
    accepted += !rejects(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut)), channels);
    std::vector<std::uint8_t> flipped = bytes;
    flipped[rng() % flipped.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    ++damaged;
    accepted += !rejects(flipped, channels);
    std::vector<std::uint8_t> longer = bytes;
    longer.push_back(static_cast<std::uint8_t>(rng()));
    ++damaged;
    accepted += !rejects(longer, channels);
  }
  Outcome o;
  o.pass = round_trip_bad == 0 && accepted == 0;
  o.detail = fmt("round-trip failures %.0f/1000, damaged streams accepted %.0f/%.0f", round_trip_bad, accepted,
                 damaged);
  return o;
}

// ---- criterion 10

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism(const Trained& t) {
  harness::AppConfig app = t.app;
  app.axes.modes = {harness::FusionMode::NoFusion, harness::FusionMode::MmCooper};
  app.axes.sigma_xy = {0.0, 0.4};
  app.axes.keep_percent = {50.0, 70.0};
  app.seed_count = 4;
  const auto root = std::filesystem::temp_directory_path() / "mmcoop_acceptance_sweep";
  std::filesystem::remove_all(root);
  std::vector<std::filesystem::path> dirs;
  for (int threads : {1, 1, 3}) {
    app.threads = threads;
    const harness::SweepConfig sc = app.sweep();
    dirs.push_back(root / ("run" + std::to_string(dirs.size())));
    harness::emit_outputs(harness::run_sweep(sc, t.params), sc.axes, harness::config_to_json(app), dirs.back());
  }
  int identical = 0, compared = 0;
  for (const char* name : {"sweep.csv", "tradeoff.csv"}) {
    const std::string ref = slurp(dirs[0] / name);
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      ++compared;
      identical += !ref.empty() && slurp(dirs[i] / name) == ref;
    }
  }
  std::filesystem::remove_all(root);
  Outcome o;
  o.pass = identical == compared;
  o.detail = fmt("%.0f/%.0f CSV comparisons byte-identical (repeat and 1 vs 3 threads)", identical, compared);
  return o;
}

}  // namespace

int main() {
  std::vector<std::pair<int, std::function<Outcome()>>> plan;
  Trained trained;
  ModeResult modes;
  bool trend = false;
  plan.emplace_back(1, gradient_audit);
  plan.emplace_back(2, geometry_oracles);
  plan.emplace_back(3, bandwidth);
  plan.emplace_back(4, routing);
  plan.emplace_back(5, [&] {
    trained = train_default();
    modes = mode_comparison(trained);
    Outcome o = table_trend(modes, trained);
    trend = o.pass;
    return o;
  });
  plan.emplace_back(6, [&] { return volume_trend(modes, trend); });
  plan.emplace_back(7, [&] { return robustness(trained); });
  plan.emplace_back(8, [&] { return training(trained); });
  plan.emplace_back(9, wire_format);
  plan.emplace_back(10, [&] { return determinism(trained); });

  int failed = 0;
  for (auto& [id, run] : plan) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
