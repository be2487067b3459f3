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

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "mmcoop/numerics/attention.hpp"
#include "mmcoop/numerics/mlp.hpp"
#include "mmcoop/scene/scenario.hpp"

namespace mmcoop::fusion {

using numerics::Matrix;
using numerics::Var;

/// One received cell in ego grid coordinates. `pos_row`/`pos_col` is the
/// continuous projected position in cell units (cell r spans [r, r+1)).
struct CollabCell {
  int row = 0;
  int col = 0;
  double pos_row = 0.5;
  double pos_col = 0.5;
};

/// Frame-projected features from one collaborator; `values` is n x C.
struct SparseCollabFeatures {
  int collaborator = 0;
  std::vector<CollabCell> cells;
  Var values;

  std::size_t size() const { return cells.size(); }
  void validate(int height, int width) const;
};

struct ScaleLevel {
  int height = 0;
  int width = 0;
  Var ego;  // (height*width) x C
  std::vector<SparseCollabFeatures> collabs;
};

struct ScalePyramid {
  std::array<ScaleLevel, 3> levels;
};

/// (ceil(h/2)*ceil(w/2)) x (h*w) averaging over the cells present in each block.
std::shared_ptr<const numerics::SparseMatrix> pool_operator(int height, int width);
/// (h*w) x (ceil(h/f)*ceil(w/f)) nearest-neighbor copy.
std::shared_ptr<const numerics::SparseMatrix> upsample_operator(int height, int width, int factor);

SparseCollabFeatures pool_sparse(const SparseCollabFeatures& fine);

ScalePyramid multiscale_encode(const Var& ego, int height, int width,
                               std::span<const SparseCollabFeatures> collabs);

/// Per-cell cross-attention over received cells in the s x s window.
///
/// Keys and values are the received vectors extended by (drow, dcol, drow^2 +
/// dcol^2), the key position relative to the query cell center; the query MLP
/// maps C -> C+3. Cells without received neighbors pass [ego | 0 0 0].
Var moa(numerics::ParamBinder& bind, const Var& ego, int height, int width,
        std::span<const SparseCollabFeatures> collabs, int window, const numerics::MlpParams& q_mlp,
        bool offset_aware = true);

struct MofParams {
  std::array<numerics::MlpParams, 3> query;  // C -> C+3 per scale
  numerics::MlpParams projection;            // 4C+9 -> C

  // Nearest-key queries and a projection that reads placement-corrected
  // descriptors from the finest scale next to the ego descriptors.
  static MofParams structured(int channels, double sharpness = 8.0);
  static MofParams identity_slice(int channels);
  void validate(int channels) const;
};

struct MofOptions {
  int window = 3;
  bool offset_aware = true;
  bool multiscale = true;

  void validate() const;
};

/// Output is (H*W) x C.
Var mof(numerics::ParamBinder& bind, const MofParams& params, const Var& ego, const scene::GridSpec& grid,
        std::span<const SparseCollabFeatures> collabs, const MofOptions& options = {});

}  // namespace mmcoop::fusion
