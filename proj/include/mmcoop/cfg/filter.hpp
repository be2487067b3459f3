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

#include <memory>
#include <vector>

#include "mmcoop/numerics/attention.hpp"
#include "mmcoop/numerics/mlp.hpp"
#include "mmcoop/scene/observation.hpp"

namespace mmcoop::cfg {

using numerics::Matrix;
using numerics::Var;

struct CfgConfig {
  double keep_percent = 70.0;
  double tau = 1.0;
  int kernel = 5;
  double sigma = 1.0;  // cells
  double c_min = 0.1;
  double confidence_floor = 1e-6;

  void validate() const;
};

/// Per-cell logit heads (C -> 1) for the feature and box stages.
struct ConfidenceHeads {
  numerics::MlpParams feature;
  numerics::MlpParams box;

  static ConfidenceHeads occupancy_prior(int channels);
};

/// Maps are (H*W) x 1 columns in row-major cell order.
struct ConfidenceMaps {
  Var c_f;
  Var c_b;
};

ConfidenceMaps confidence_heads(numerics::ParamBinder& bind, const ConfidenceHeads& heads, const Var& features);

/// Normalized k x k Gaussian kernel.
Matrix gaussian_kernel(int k, double sigma);
/// Linear operator on row-major H*W vectors: convolution with the kernel
/// under mirror padding (edge cell not repeated).
std::shared_ptr<const numerics::SparseMatrix> gaussian_operator(int height, int width, int k, double sigma);
Matrix gaussian_smooth(const Matrix& map, int k, double sigma);
Var gaussian_smooth(const Var& column, int height, int width, int k, double sigma);

/// Exactly ceil(p/100 * n) ones at the largest entries; ties go to the lower
/// row-major index. Same shape as `map`.
Matrix topp_mask(const Matrix& map, double percent);

struct GumbelSample {
  Matrix hard;  // n x 2 one-hot over (feature, box)
  Matrix soft;  // n x 2
  Var routed;   // forward = hard, gradient of soft
};

/// Per cell: softmax((log max(C_s, floor) + g_s) / tau) over the two stages
/// with standard Gumbel g_s drawn (feature, box) per cell in row-major order.
GumbelSample gumbel_stage_select(const Var& c_f, const Var& c_b, double tau, Rng& rng, double floor = 1e-6);

/// Routing decision for one agent. All maps are H x W.
struct StageFilter {
  int height = 0;
  int width = 0;
  Matrix smooth_f, smooth_b;
  Matrix top_f, top_b;
  Matrix route_f, route_b;  // hard one-hot
  Matrix soft_f, soft_b;
  Matrix eligible;          // 1 where a smoothed confidence reaches c_min
  Matrix final_f, final_b;  // route ⊙ top ⊙ eligible
  Var gate_f, gate_b;       // (H*W) x 1; forward equals final_*, STE gradient

  std::size_t feature_cells() const;
  std::size_t box_cells() const;
};

StageFilter generate_filter(numerics::ParamBinder& bind, const ConfidenceHeads& heads,
                            const scene::FeatureMap& features, const CfgConfig& cfg, Rng& rng);

struct AnchoredBox {
  geometry::BBox7 box;
  int row = 0;
  int col = 0;
};

struct SelectedCell {
  int row = 0;
  int col = 0;
  numerics::RowVector values;
};

struct FilteredContent {
  std::vector<SelectedCell> features;
  std::vector<AnchoredBox> boxes;
  std::size_t feature_cells = 0;
  std::size_t box_cells = 0;
  std::size_t suppressed_cells = 0;
};

/// Cells with final_f go out as features, boxes whose anchor cell has final_b
/// go out as boxes; everything else is suppressed.
FilteredContent compose_and_apply(const scene::FeatureMap& features, const std::vector<AnchoredBox>& boxes,
                                  const StageFilter& filter);

}  // namespace mmcoop::cfg
