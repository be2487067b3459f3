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
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mmcoop/cfg/filter.hpp"
#include "mmcoop/comms/channel.hpp"
#include "mmcoop/detection/heads.hpp"
#include "mmcoop/fusion/late.hpp"
#include "mmcoop/fusion/mid.hpp"
#include "mmcoop/scene/observation.hpp"

namespace mmcoop::detection {

enum class FusionMode { NoFusion, LateOnly, IntermediateOnly, MmCooper };

std::string to_string(FusionMode m);
FusionMode parse_mode(const std::string& name);

struct ModelParams {
  numerics::MlpParams encoder;  // fixed proxy encoder, never trained
  cfg::ConfidenceHeads confidence;
  fusion::MofParams mof;
  fusion::LateParams late;
  DetectionHeads heads;

  static ModelParams initial(const scene::GridSpec& grid, std::uint64_t seed);
  void validate(const scene::GridSpec& grid) const;

  // Stable names, encoder excluded.
  std::vector<std::pair<std::string, Matrix*>> trainable();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

struct PipelineConfig {
  FusionMode mode = FusionMode::MmCooper;
  cfg::CfgConfig cfg;
  comms::ChannelConfig channel;
  fusion::BfcConfig bfc;
  fusion::MofOptions mof;
  bool bfc_enabled = true;
  AnchorSpec anchor;
  double score_floor = 0.1;
  double nms_iou = 0.15;
  double obs_noise = 0.05;
  double match_iou = 0.3;

  void validate() const;
};

struct SenderStats {
  int sender = 0;
  int sent_step = 0;
  bool delivered = false;
  std::size_t bytes = 0;  // serialized message size
  double volume = 0.0;    // log2 payload bytes
  std::size_t feature_cells = 0;
  std::size_t boxes = 0;
};

struct FrameResult {
  int timestep = 0;
  std::vector<BBox7> detections;  // ego frame, after merge and NMS
  std::vector<BBox7> truth;       // ego frame, centers inside the grid
  std::vector<SenderStats> senders;
  std::size_t bytes_sent = 0;
};

/// A collaborator's broadcast built from its snapshot at `step`, with the
/// sender-grid flat index of every feature cell and box anchor.
struct OutgoingMessage {
  comms::CoopMessage message;
  std::vector<Eigen::Index> feature_cells;
  std::vector<Eigen::Index> box_cells;
  cfg::StageFilter filter;  // set in MmCooper mode only
};

OutgoingMessage compose_message(numerics::ParamBinder& bind, const scene::Scenario& s, const ModelParams& params,
                                const PipelineConfig& cfg, int sender, int step, std::uint64_t seed);

/// One ego frame at step t. Collaborator content is built from its snapshot
/// at t - delay and delivered through the channel at t. When `loss` is given
/// the total loss is recorded on the binder's tape.
FrameResult forward_frame(numerics::ParamBinder& bind, const scene::Scenario& s, const ModelParams& params,
                          const PipelineConfig& cfg, int t, std::uint64_t seed, LossTerms* loss = nullptr);

FrameResult run_frame(const scene::Scenario& s, const ModelParams& params, const PipelineConfig& cfg, int t,
                      std::uint64_t seed);

struct TrainSample {
  scene::Scenario scenario;
  int timestep = 0;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  int steps = 200;
  double lr = 0.1;
};

/// Full-batch gradient descent on the mean frame loss. Returns the loss
/// before every step followed by the final loss (steps + 1 values).
std::vector<double> train_toy(ModelParams& params, std::span<const TrainSample> samples,
                              const PipelineConfig& cfg, const TrainOptions& opt);

/// Versioned little-endian float64 blob with a name and shape manifest.
std::vector<std::uint8_t> save_params(const ModelParams& p);
void load_params(ModelParams& p, const std::vector<std::uint8_t>& blob);

}  // namespace mmcoop::detection
