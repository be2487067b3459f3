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
#include <filesystem>
#include <string>
#include <vector>

#include "mmcoop/detection/model.hpp"
#include "mmcoop/scene/scenario.hpp"

namespace mmcoop::harness {

using detection::FusionMode;

struct RunResult {
  std::vector<detection::FrameResult> frames;
};

/// Frames first_frame .. duration-1 of one scenario.
RunResult run_pipeline(const scene::Scenario& s, const detection::ModelParams& params,
                       const detection::PipelineConfig& cfg, std::uint64_t seed, int first_frame = 0);

struct RunSummary {
  double ap50 = 0.0;
  double ap70 = 0.0;
  double mean_volume = 0.0;  // per sent message, 0 without messages
  double kept_ratio = 0.0;   // transmitted feature cells / grid cells, per sent message
  double boxes = 0.0;        // transmitted boxes per sent message
  std::size_t bytes = 0;
};

/// AP is averaged over the frames.
RunSummary summarize(const RunResult& r, const scene::GridSpec& g);

struct SweepAxes {
  std::vector<FusionMode> modes{FusionMode::MmCooper};
  std::vector<double> sigma_xy{0.2};           // m
  std::vector<double> sigma_heading_deg{0.2};  // degrees
  std::vector<int> delay_steps{1};
  std::vector<double> keep_percent{70.0};

  std::size_t cells() const;
  void validate() const;
};

struct SweepConfig {
  scene::ScenarioConfig scenario;
  detection::PipelineConfig pipeline;
  SweepAxes axes;
  std::vector<std::uint64_t> seeds;
  int eval_frame = -1;  // -1: last step of the scenario
  int threads = 1;

  void validate() const;
};

struct SweepRow {
  FusionMode mode = FusionMode::MmCooper;
  double sigma_xy = 0.0;
  double sigma_heading_deg = 0.0;
  int delay_steps = 0;
  double keep_percent = 0.0;
  std::uint64_t seed = 0;  // number of seeds on aggregate rows
  RunSummary summary;
};

struct SweepResult {
  std::vector<SweepRow> rows;       // per (cell, seed), cross-product order then seed order
  std::vector<SweepRow> aggregate;  // per cell, means over seeds
};

/// Pipeline config of cross-product cell `index` (modes outermost, keep
/// percent innermost).
detection::PipelineConfig cell_config(const SweepConfig& cfg, std::size_t index, SweepRow* row = nullptr);

SweepResult run_sweep(const SweepConfig& cfg, const detection::ModelParams& params);

std::string sweep_csv(const SweepResult& r);
/// Mean V and AP per (mode, keep percent), averaged over every other axis.
std::string tradeoff_csv(const SweepResult& r, const SweepAxes& axes);

/// Writes sweep.csv, tradeoff.csv and config.echo into `dir`, each through a
/// temporary file and rename.
void emit_outputs(const SweepResult& r, const SweepAxes& axes, const std::string& config_echo,
                  const std::filesystem::path& dir);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mmcoop::harness
