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
#include <string>

#include "mmcoop/detection/model.hpp"
#include "mmcoop/harness/pipeline.hpp"

namespace mmcoop::harness {

struct TrainConfig {
  detection::TrainOptions options;
  int scenes = 4;
  std::uint64_t first_seed = 1000;
  int frame = -1;  // -1: last step
  std::uint64_t model_seed = 1;
};

/// Everything a CLI invocation can set. Sweep seeds are first_seed ..
/// first_seed + seed_count - 1.
struct AppConfig {
  scene::ScenarioConfig scenario;
  detection::PipelineConfig pipeline;
  SweepAxes axes;
  std::uint64_t first_seed = 0;
  int seed_count = 10;
  int eval_frame = -1;
  int threads = 1;
  TrainConfig train;
  std::string params_path;  // empty: train before running

  void validate() const;
  SweepConfig sweep() const;
};

std::string config_to_json(const AppConfig& c);
/// Overrides on top of `base`. Keys must exist in the resolved config;
/// `scenario.preset` is applied before the other scenario keys.
AppConfig config_from_json(const std::string& text, const AppConfig& base = {});
AppConfig load_config(const std::string& path, const AppConfig& base = {});

std::vector<detection::TrainSample> training_set(const scene::ScenarioConfig& scenario, const TrainConfig& t);

}  // namespace mmcoop::harness
