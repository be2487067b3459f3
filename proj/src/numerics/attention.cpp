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

#include "mmcoop/numerics/attention.hpp"

#include <cmath>
#include <string>

namespace mmcoop::numerics {

Vector cross_attention(const Vector& query, const Matrix& keys, const Matrix& values) {
  if (keys.rows() == 0) throw ValidationError("cross_attention: no keys");
  if (keys.cols() != query.size() || values.rows() != keys.rows()) {
    throw ValidationError("cross_attention: dimension mismatch");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.size()));
  const Vector logits = keys * query * inv_sqrt_d;
  const Vector w = softmax(logits);
  return values.transpose() * w;
}

Var cross_attention(const Var& query, const Var& keys, const Var& values) {
  if (keys.rows() == 0) throw ValidationError("cross_attention: no keys");
  if (query.rows() != 1 || keys.cols() != query.cols() || values.rows() != keys.rows()) {
    throw ValidationError("cross_attention: dimension mismatch");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.cols()));
  Var logits = scale(matmul(query, transpose(keys)), inv_sqrt_d);
  return matmul(softmax_rows(logits), values);
}

Var neighborhood_attention(const Var& query, const Var& keys, const Var& values,
                           const NeighborLists& neighbors, const Var& passthrough) {
  const Eigen::Index n = query.rows();
  const Eigen::Index dk = query.cols();
  const Eigen::Index dv = values.cols();
  if (neighbors.num_cells() != n) throw ValidationError("neighborhood_attention: cell count mismatch");
  if (keys.cols() != dk || keys.rows() != values.rows()) {
    throw ValidationError("neighborhood_attention: key/value shape mismatch");
  }
  if (passthrough.rows() != n || passthrough.cols() != dv) {
    throw ValidationError("neighborhood_attention: passthrough shape mismatch");
  }
  for (Eigen::Index k : neighbors.index) {
    if (k < 0 || k >= keys.rows()) throw ValidationError("neighborhood_attention: key index out of range");
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dk));
  const Matrix& q = query.value();
  const Matrix& kv = keys.value();
  const Matrix& vv = values.value();

  // Attention weights are kept for the backward pass, flattened like `index`.
  std::vector<double> weights(neighbors.index.size());
  Matrix out(n, dv);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto nbr = neighbors.of(i);
    if (nbr.empty()) {
      out.row(i) = passthrough.value().row(i);
      continue;
    }
    const std::size_t base = static_cast<std::size_t>(neighbors.offsets[i]);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nbr.size(); ++j) {
      weights[base + j] = q.row(i).dot(kv.row(nbr[j])) * inv_sqrt_d;
      mx = std::max(mx, weights[base + j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < nbr.size(); ++j) {
      weights[base + j] = std::exp(weights[base + j] - mx);
      total += weights[base + j];
    }
    out.row(i).setZero();
    for (std::size_t j = 0; j < nbr.size(); ++j) {
      weights[base + j] /= total;
      out.row(i) += weights[base + j] * vv.row(nbr[j]);
    }
  }

  Var parents[] = {query, keys, values, passthrough};
  return query.tape().record(
      std::move(out), parents,
      [query, keys, values, passthrough, neighbors, weights, inv_sqrt_d](Tape& t,
                                                                          const Matrix& g) {
        const Matrix& q = query.value();
        const Matrix& kv = keys.value();
        const Matrix& vv = values.value();
        Matrix dq = Matrix::Zero(q.rows(), q.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dvals = Matrix::Zero(vv.rows(), vv.cols());
        Matrix dpass = Matrix::Zero(passthrough.rows(), passthrough.cols());
        std::vector<double> dw;
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
          auto nbr = neighbors.of(i);
          if (nbr.empty()) {
            dpass.row(i) = g.row(i);
            continue;
          }
          const std::size_t base = static_cast<std::size_t>(neighbors.offsets[i]);
          dw.assign(nbr.size(), 0.0);
          double wdw = 0.0;
          for (std::size_t j = 0; j < nbr.size(); ++j) {
            const double w = weights[base + j];
            dvals.row(nbr[j]) += w * g.row(i);
            dw[j] = g.row(i).dot(vv.row(nbr[j]));
            wdw += w * dw[j];
          }
          for (std::size_t j = 0; j < nbr.size(); ++j) {
            const double ds = weights[base + j] * (dw[j] - wdw) * inv_sqrt_d;
            dq.row(i) += ds * kv.row(nbr[j]);
            dk.row(nbr[j]) += ds * q.row(i);
          }
        }
        if (query.requires_grad()) t.accumulate(query, dq);
        if (keys.requires_grad()) t.accumulate(keys, dk);
        if (values.requires_grad()) t.accumulate(values, dvals);
        if (passthrough.requires_grad()) t.accumulate(passthrough, dpass);
      });
}

namespace {

struct Corner {
  Eigen::Index cell;  // -1 when outside the grid
  double weight;
  double d_row;  // d weight / d row coordinate
  double d_col;
};

void bilinear_corners(double r, double c, Eigen::Index height, Eigen::Index width,
                      Corner (&corners)[4]) {
  const double r0 = std::floor(r);
  const double c0 = std::floor(c);
  const double fr = r - r0;
  const double fc = c - c0;
  const Eigen::Index ir = static_cast<Eigen::Index>(r0);
  const Eigen::Index ic = static_cast<Eigen::Index>(c0);
  const Eigen::Index rr[4] = {ir, ir, ir + 1, ir + 1};
  const Eigen::Index cc[4] = {ic, ic + 1, ic, ic + 1};
  const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
  const double dr[4] = {-(1 - fc), -fc, 1 - fc, fc};
  const double dc[4] = {-(1 - fr), 1 - fr, -fr, fr};
  for (int k = 0; k < 4; ++k) {
    const bool inside = rr[k] >= 0 && rr[k] < height && cc[k] >= 0 && cc[k] < width;
    corners[k] = Corner{inside ? rr[k] * width + cc[k] : -1, w[k], dr[k], dc[k]};
  }
}

}  // namespace

Var bilinear_sample(const Var& grid, Eigen::Index height, Eigen::Index width, const Matrix& base,
                    const Var& offsets) {
  if (grid.rows() != height * width) throw ValidationError("bilinear_sample: grid size mismatch");
  if (base.cols() != 2 || offsets.cols() != 2 || offsets.rows() != base.rows()) {
    throw ValidationError("bilinear_sample: positions must be n x 2");
  }
  const Eigen::Index n = base.rows();
  const Matrix pos = base + offsets.value();
  Matrix out = Matrix::Zero(n, grid.cols());
  Corner corners[4];
  for (Eigen::Index i = 0; i < n; ++i) {
    bilinear_corners(pos(i, 0), pos(i, 1), height, width, corners);
    for (const Corner& k : corners) {
      if (k.cell >= 0) out.row(i) += k.weight * grid.value().row(k.cell);
    }
  }
  Var parents[] = {grid, offsets};
  return grid.tape().record(
      std::move(out), parents, [grid, offsets, pos, height, width](Tape& t, const Matrix& g) {
        Matrix dgrid = Matrix::Zero(grid.rows(), grid.cols());
        Matrix doff = Matrix::Zero(offsets.rows(), 2);
        Corner corners[4];
        for (Eigen::Index i = 0; i < pos.rows(); ++i) {
          bilinear_corners(pos(i, 0), pos(i, 1), height, width, corners);
          for (const Corner& k : corners) {
            if (k.cell < 0) continue;
            dgrid.row(k.cell) += k.weight * g.row(i);
            const double gv = g.row(i).dot(grid.value().row(k.cell));
            doff(i, 0) += k.d_row * gv;
            doff(i, 1) += k.d_col * gv;
          }
        }
        if (grid.requires_grad()) t.accumulate(grid, dgrid);
        if (offsets.requires_grad()) t.accumulate(offsets, doff);
      });
}

Var group_weighted_sum(const Var& weights, const Var& rows) {
  const Eigen::Index groups = weights.rows();
  const Eigen::Index m = weights.cols();
  if (rows.rows() != groups * m) throw ValidationError("group_weighted_sum: row count mismatch");
  Matrix out = Matrix::Zero(groups, rows.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (Eigen::Index j = 0; j < m; ++j) out.row(gi) += weights.value()(gi, j) * rows.value().row(gi * m + j);
  }
  Var parents[] = {weights, rows};
  return weights.tape().record(std::move(out), parents, [weights, rows](Tape& t, const Matrix& g) {
    const Eigen::Index groups = weights.rows();
    const Eigen::Index m = weights.cols();
    Matrix dw(groups, m);
    Matrix dr(rows.rows(), rows.cols());
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      for (Eigen::Index j = 0; j < m; ++j) {
        dw(gi, j) = g.row(gi).dot(rows.value().row(gi * m + j));
        dr.row(gi * m + j) = weights.value()(gi, j) * g.row(gi);
      }
    }
    if (weights.requires_grad()) t.accumulate(weights, dw);
    if (rows.requires_grad()) t.accumulate(rows, dr);
  });
}

}  // namespace mmcoop::numerics
