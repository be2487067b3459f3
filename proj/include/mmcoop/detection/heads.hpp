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

#include "mmcoop/fusion/late.hpp"
#include "mmcoop/numerics/mlp.hpp"
#include "mmcoop/scene/scenario.hpp"

namespace mmcoop::detection {

using geometry::BBox7;
using numerics::Matrix;
using numerics::Var;

/// One anchor per cell with yaw 0. Encoding: dx, dy, dz in cells relative to
/// (cell center, z0); log ratios for l, w, h; raw yaw.
struct AnchorSpec {
  double l0 = 4.5;
  double w0 = 2.0;
  double h0 = 1.6;
  double z0 = -1.0;

  void validate() const;
};

Eigen::Matrix<double, 7, 1> encode_box(const BBox7& box, const AnchorSpec& a, const scene::GridSpec& g, int row,
                                       int col);
BBox7 decode_box(const Eigen::Matrix<double, 7, 1>& code, const AnchorSpec& a, const scene::GridSpec& g, int row,
                 int col);

struct DetectionHeads {
  numerics::MlpParams reg;  // C -> 7
  numerics::MlpParams cls;  // C -> 2 (foreground, background)

  // Regression reads the placement-corrected offsets and yaw channels; the
  // classifier starts at a foreground prior of `prior`.
  static DetectionHeads initial(int channels, double prior = 0.01);
  void validate(Eigen::Index channels) const;
};

struct HeadOutputs {
  Var reg;  // (H*W) x 7
  Var cls;  // (H*W) x 2
};

HeadOutputs decode_heads(numerics::ParamBinder& bind, const DetectionHeads& heads, const Var& features);

struct DecodedBox {
  BBox7 box;
  int row = 0;
  int col = 0;
};

/// Foreground probability per cell, softmax over the two class logits.
Eigen::VectorXd foreground_scores(const Matrix& cls);

std::vector<DecodedBox> decode_boxes(const Matrix& reg, const Matrix& cls, const AnchorSpec& a,
                                     const scene::GridSpec& g, double score_floor);

struct DetectionTargets {
  std::vector<double> positive;  // per cell
  Matrix reg;                    // (H*W) x 7, meaningful on positives
  std::size_t num_positive() const;
};

/// A cell is positive iff it holds a ground-truth center; the first box wins
/// when two centers share a cell.
DetectionTargets build_targets(std::span<const BBox7> truth, const AnchorSpec& a, const scene::GridSpec& g);

struct LossTerms {
  Var reg, cls, off, score, total;
};

Var regression_loss(numerics::Tape& tape, const HeadOutputs& h, const DetectionTargets& t);
Var classification_loss(const HeadOutputs& h, const DetectionTargets& t, double alpha = 0.25,
                        double gamma = 2.0);
/// Unit-weight sum of the four terms.
LossTerms total_loss(numerics::Tape& tape, const HeadOutputs& h, const DetectionTargets& t,
                     const fusion::BfcLosses& bfc);

}  // namespace mmcoop::detection
