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

#include "mmcoop/harness/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "mmcoop/error.hpp"
#include "mmcoop/harness/metrics.hpp"

namespace mmcoop::harness {

RunResult run_pipeline(const scene::Scenario& s, const detection::ModelParams& params,
                       const detection::PipelineConfig& cfg, std::uint64_t seed, int first_frame) {
  if (first_frame < 0 || first_frame >= s.duration) throw ValidationError("run_pipeline: first frame out of range");
  RunResult r;
  for (int t = first_frame; t < s.duration; ++t) r.frames.push_back(detection::run_frame(s, params, cfg, t, seed));
  return r;
}

RunSummary summarize(const RunResult& r, const scene::GridSpec& g) {
  RunSummary out;
  std::size_t messages = 0;
  for (const detection::FrameResult& f : r.frames) {
    out.ap50 += average_precision(f.detections, f.truth, 0.5);
    out.ap70 += average_precision(f.detections, f.truth, 0.7);
    out.bytes += f.bytes_sent;
    for (const detection::SenderStats& st : f.senders) {
      if (st.sent_step < 0) continue;
      ++messages;
      out.mean_volume += st.volume;
      out.kept_ratio += static_cast<double>(st.feature_cells) / g.num_cells();
      out.boxes += static_cast<double>(st.boxes);
    }
  }
  if (!r.frames.empty()) {
    out.ap50 /= static_cast<double>(r.frames.size());
    out.ap70 /= static_cast<double>(r.frames.size());
  }
  if (messages > 0) {
    out.mean_volume /= static_cast<double>(messages);
    out.kept_ratio /= static_cast<double>(messages);
    out.boxes /= static_cast<double>(messages);
  }
  return out;
}

std::size_t SweepAxes::cells() const {
  return modes.size() * sigma_xy.size() * sigma_heading_deg.size() * delay_steps.size() * keep_percent.size();
}

void SweepAxes::validate() const {
  if (cells() == 0) throw ValidationError("sweep: every axis needs at least one value");
  for (double v : sigma_xy) {
    if (!(v >= 0)) throw ValidationError("sweep: sigma_xy must be >= 0");
  }
  for (double v : sigma_heading_deg) {
    if (!(v >= 0)) throw ValidationError("sweep: sigma_heading must be >= 0");
  }
  for (int d : delay_steps) {
    if (d < 0) throw ValidationError("sweep: delay must be >= 0");
  }
  for (double p : keep_percent) {
    if (!(p >= 0 && p <= 100)) throw ValidationError("sweep: keep percent must be in [0, 100]");
  }
}

void SweepConfig::validate() const {
  scenario.validate();
  pipeline.validate();
  axes.validate();
  if (seeds.empty()) throw ValidationError("sweep: at least one seed required");
  if (eval_frame < -1 || eval_frame >= scenario.duration) throw ValidationError("sweep: eval frame out of range");
  if (threads < 1) throw ValidationError("sweep: threads must be >= 1");
}

detection::PipelineConfig cell_config(const SweepConfig& cfg, std::size_t index, SweepRow* row) {
  const SweepAxes& a = cfg.axes;
  std::size_t i = index;
  const double keep = a.keep_percent[i % a.keep_percent.size()];
  i /= a.keep_percent.size();
  const int delay = a.delay_steps[i % a.delay_steps.size()];
  i /= a.delay_steps.size();
  const double heading = a.sigma_heading_deg[i % a.sigma_heading_deg.size()];
  i /= a.sigma_heading_deg.size();
  const double sxy = a.sigma_xy[i % a.sigma_xy.size()];
  i /= a.sigma_xy.size();
  if (i >= a.modes.size()) throw ValidationError("sweep: cell index out of range");
  const FusionMode mode = a.modes[i];

  detection::PipelineConfig p = cfg.pipeline;
  p.mode = mode;
  p.channel.sigma_xy = sxy;
  p.channel.sigma_heading = heading * std::numbers::pi / 180.0;
  p.channel.delay_steps = delay;
  p.cfg.keep_percent = keep;
  if (row) {
    row->mode = mode;
    row->sigma_xy = sxy;
    row->sigma_heading_deg = heading;
    row->delay_steps = delay;
    row->keep_percent = keep;
  }
  return p;
}

SweepResult run_sweep(const SweepConfig& cfg, const detection::ModelParams& params) {
  cfg.validate();
  params.validate(cfg.scenario.grid);
  const std::size_t cells = cfg.axes.cells(), nseeds = cfg.seeds.size();
  const int frame = cfg.eval_frame < 0 ? cfg.scenario.duration - 1 : cfg.eval_frame;

  SweepResult r;
  r.rows.resize(cells * nseeds);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t job = next++; job < r.rows.size(); job = next++) {
      try {
        SweepRow& row = r.rows[job];
        const detection::PipelineConfig p = cell_config(cfg, job / nseeds, &row);
        row.seed = cfg.seeds[job % nseeds];
        const scene::Scenario s = scene::generate_scenario(cfg.scenario, row.seed);
        row.summary = summarize(run_pipeline(s, params, p, row.seed, frame), s.grid);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nthreads = std::min<int>(cfg.threads, static_cast<int>(r.rows.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t c = 0; c < cells; ++c) {
    SweepRow agg;
    cell_config(cfg, c, &agg);
    agg.seed = nseeds;
    for (std::size_t k = 0; k < nseeds; ++k) {
      const RunSummary& s = r.rows[c * nseeds + k].summary;
      agg.summary.ap50 += s.ap50;
      agg.summary.ap70 += s.ap70;
      agg.summary.mean_volume += s.mean_volume;
      agg.summary.kept_ratio += s.kept_ratio;
      agg.summary.boxes += s.boxes;
      agg.summary.bytes += s.bytes;
    }
    const double n = static_cast<double>(nseeds);
    agg.summary.ap50 /= n;
    agg.summary.ap70 /= n;
    agg.summary.mean_volume /= n;
    agg.summary.kept_ratio /= n;
    agg.summary.boxes /= n;
    r.aggregate.push_back(agg);
  }
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void append_row(std::ostringstream& os, const char* kind, const SweepRow& row) {
  const RunSummary& s = row.summary;
  os << kind << ',' << detection::to_string(row.mode) << ',' << fixed(row.sigma_xy) << ','
     << fixed(row.sigma_heading_deg) << ',' << row.delay_steps << ',' << fixed(row.keep_percent) << ','
     << row.seed << ',' << fixed(s.ap50) << ',' << fixed(s.ap70) << ',' << fixed(s.mean_volume) << ','
     << fixed(s.kept_ratio) << ',' << fixed(s.boxes) << '\n';
}

}  // namespace

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "# AP: all-point interpolation at IoU 0.5 and 0.7, no per-frame detection cap; "
        "seed column holds the seed count on mean rows\n";
  os << "kind,mode,sigma_xy,sigma_heading_deg,delay_steps,keep_percent,seed,ap50,ap70,mean_volume,kept_ratio,"
        "boxes\n";
  for (const SweepRow& row : r.rows) append_row(os, "seed", row);
  for (const SweepRow& row : r.aggregate) append_row(os, "mean", row);
  return os.str();
}

std::string tradeoff_csv(const SweepResult& r, const SweepAxes& axes) {
  std::ostringstream os;
  os << "mode,keep_percent,mean_volume,ap50,ap70\n";
  if (r.aggregate.empty()) return os.str();
  for (FusionMode m : axes.modes) {
    for (double keep : axes.keep_percent) {
      double v = 0, a5 = 0, a7 = 0;
      int n = 0;
      for (const SweepRow& row : r.aggregate) {
        if (row.mode != m || row.keep_percent != keep) continue;
        v += row.summary.mean_volume;
        a5 += row.summary.ap50;
        a7 += row.summary.ap70;
        ++n;
      }
      if (n == 0) continue;
      os << detection::to_string(m) << ',' << fixed(keep) << ',' << fixed(v / n) << ',' << fixed(a5 / n) << ','
         << fixed(a7 / n) << '\n';
    }
  }
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot replace '" + path.string() + "': " + ec.message());
}

void emit_outputs(const SweepResult& r, const SweepAxes& axes, const std::string& config_echo,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  write_file_atomic(dir / "sweep.csv", sweep_csv(r));
  write_file_atomic(dir / "tradeoff.csv", tradeoff_csv(r, axes));
  write_file_atomic(dir / "config.echo", config_echo);
}

}  // namespace mmcoop::harness
