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

#include <span>
#include <vector>

#include "mmcoop/geometry/box.hpp"
#include "mmcoop/numerics/attention.hpp"
#include "mmcoop/numerics/mlp.hpp"
#include "mmcoop/scene/scenario.hpp"

namespace mmcoop::fusion {

using geometry::BBox7;
using numerics::Matrix;
using numerics::Var;

struct BoxEntry {
  int row = 0;
  int col = 0;
  std::size_t source = 0;  // index into the encoded box list
};

/// One entry per in-grid box, in input order; `features` is n x D.
struct BoxFeatureMap {
  std::vector<BoxEntry> entries;
  Var features;
  std::size_t dropped = 0;

  std::size_t size() const { return entries.size(); }
};

/// Encoder input: (x, y) divided by the grid half extents, then z, l, w, h, yaw.
Matrix box_inputs(std::span<const BBox7> boxes, const scene::GridSpec& grid);

/// `gates`, when given, is n x 1 and scales each box's row (the sender's
/// box-stage gate at the box's anchor cell).
BoxFeatureMap encode_boxes(numerics::ParamBinder& bind, std::span<const BBox7> boxes,
                           const numerics::MlpParams& enc, const scene::GridSpec& grid,
                           const Var* gates = nullptr);

struct DbaParams {
  int heads = 2;
  int points = 4;
  numerics::MlpParams offsets;  // D -> heads*points*2, (drow, dcol) in cells
  numerics::MlpParams weights;  // D -> heads*points
  Matrix w_alpha;               // (heads*C) x D

  void validate(Eigen::Index d, Eigen::Index c) const;
};

/// out(q) = sum_a W_a sum_m softmax_m(w(F_b(q)))_{a,m} F(q + dq_{a,m}) + F_b(q),
/// reading the fused (H*W) x C map bilinearly with zero padding.
Var dba(numerics::ParamBinder& bind, const BoxFeatureMap& boxes, const Var& fused, const scene::GridSpec& grid,
        const DbaParams& params);

struct BfcParams {
  int heads = 2;
  Matrix wq, wk, wv, wo;         // D x D
  numerics::MlpParams ffn;       // D -> hidden -> D
  numerics::MlpParams score;     // D -> 1
  numerics::MlpParams offset;    // D -> 3

  void validate(Eigen::Index d) const;
};

struct BfcConfig {
  double score_thresh = 0.5;
  double max_xy_offset = 2.0;   // m
  double max_yaw_offset = 0.2;  // rad

  void validate() const;
};

/// Per entry: score in [0, 1] and (dx, dy, dyaw) within the configured bounds.
struct CalibrationOutput {
  Var score_logit;  // n x 1, score = sigmoid(logit)
  Var score;        // n x 1
  Var offsets;      // n x 3
};

/// x + MultiHead(x) W_o: the self-attention half of the BFC block.
Var bfc_attention(numerics::ParamBinder& bind, const Var& x, const BfcParams& params);

CalibrationOutput bfc_forward(numerics::ParamBinder& bind, const Var& enhanced, const BfcParams& params,
                              const BfcConfig& cfg);

/// Survivors of the quality threshold, shifted by their offsets. Each keeps
/// its detection score.
std::vector<BBox7> apply_calibration(std::span<const BBox7> boxes, const BoxFeatureMap& map,
                                     const CalibrationOutput& out, const BfcConfig& cfg);

struct LateParams {
  numerics::MlpParams box_encoder;  // 7 -> D
  DbaParams dba;
  BfcParams bfc;

  // Encoder copies the normalized box into the first 7 dims, DBA copies the
  // fused descriptor at the anchor into dims 8..15, the block starts as identity.
  static LateParams initial(int channels, Rng& rng);
  void validate(Eigen::Index c) const;
};

struct LateResult {
  BoxFeatureMap map;
  CalibrationOutput output;
  std::vector<BBox7> calibrated;
};

LateResult calibrate_boxes(numerics::ParamBinder& bind, const LateParams& params, std::span<const BBox7> boxes,
                           const Var* gates, const Var& fused, const scene::GridSpec& grid, const BfcConfig& cfg);

struct BfcTargets {
  std::vector<double> positive;  // 1 or 0 per entry
  Matrix offsets;                // n x 3, meaningful on positives
  std::size_t num_positive() const;
};

/// Matches each entry's box to its highest-IoU ground truth at IoU >= thresh.
BfcTargets match_boxes(std::span<const BBox7> boxes, const BoxFeatureMap& map, std::span<const BBox7> truth,
                       double iou_thresh = 0.3);

struct BfcLosses {
  Var offset;  // smooth-L1 summed over coordinates, mean over positives
  Var score;   // focal loss sum over entries / max(1, positives)
};

BfcLosses bfc_losses(numerics::Tape& tape, const CalibrationOutput& out, const BfcTargets& targets,
                     double alpha = 0.25, double gamma = 2.0);

std::vector<BBox7> merge_and_nms(std::span<const BBox7> ego, std::span<const BBox7> calibrated,
                                 std::span<const BBox7> fused, double iou_thresh);

}  // namespace mmcoop::fusion
