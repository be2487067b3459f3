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

#include <cmath>
#include <span>
#include <vector>

#include "mmcoop/error.hpp"
#include "mmcoop/numerics/autodiff.hpp"

namespace mmcoop::numerics {

/// Numerically stable softmax of a vector expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw ValidationError("softmax: empty input");
  if (!v.allFinite()) throw NumericError("softmax: non-finite input");
  const Scalar m = v.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e =
      (v.derived().reshaped().array() - m).exp().matrix();
  return e / e.sum();
}

/// softmax(q K^T / sqrt(d_k)) V for a single query.
Vector cross_attention(const Vector& query, const Matrix& keys, const Matrix& values);

/// Differentiable single-query attention; query is 1 x d_k.
Var cross_attention(const Var& query, const Var& keys, const Var& values);

/// Compressed neighbor lists: cell i attends to key rows
/// index[offsets[i] .. offsets[i+1]).
struct NeighborLists {
  std::vector<Eigen::Index> offsets{0};
  std::vector<Eigen::Index> index;

  Eigen::Index num_cells() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
  std::span<const Eigen::Index> of(Eigen::Index cell) const {
    return {index.data() + offsets[cell], static_cast<std::size_t>(offsets[cell + 1] - offsets[cell])};
  }
};

/// Batched scaled dot-product attention over per-cell key subsets.
///
/// Row i of the result is attention(query.row(i), keys[nbr(i)], values[nbr(i)]),
/// or passthrough.row(i) when cell i has no neighbors. Keys in each list are
/// visited in stored order, so results are reproducible bit for bit.
Var neighborhood_attention(const Var& query, const Var& keys, const Var& values,
                           const NeighborLists& neighbors, const Var& passthrough);

/// Bilinear reads from a (height*width) x C row-major grid at
/// base + offset, in (row, col) cell coordinates. Points outside the grid
/// read zeros.
Var bilinear_sample(const Var& grid, Eigen::Index height, Eigen::Index width,
                    const Matrix& base, const Var& offsets);

/// Groups of `m` consecutive rows of `rows` combined by per-group weights:
/// out.row(g) = sum_j weights(g, j) * rows.row(g*m + j).
Var group_weighted_sum(const Var& weights, const Var& rows);

}  // namespace mmcoop::numerics
