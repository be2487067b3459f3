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

#include "mmcoop/fusion/mid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mmcoop/error.hpp"

namespace mmcoop::fusion {

using numerics::ParamBinder;
using numerics::SparseMatrix;
using numerics::Tape;

namespace {

int ceil_half(int n) { return (n + 1) / 2; }

Var zeros_like_rows(Tape& tape, Eigen::Index rows, Eigen::Index cols) {
  return tape.constant(Matrix::Zero(rows, cols));
}

}  // namespace

void SparseCollabFeatures::validate(int height, int width) const {
  if (cells.empty()) return;
  if (!values.valid() || values.rows() != static_cast<Eigen::Index>(cells.size())) {
    throw ValidationError("collab features: value rows do not match cell count");
  }
  std::set<std::pair<int, int>> seen;
  for (const CollabCell& c : cells) {
    if (c.row < 0 || c.row >= height || c.col < 0 || c.col >= width) {
      throw ValidationError("collab features: cell outside grid");
    }
    if (!std::isfinite(c.pos_row) || !std::isfinite(c.pos_col)) {
      throw ValidationError("collab features: non-finite position");
    }
    if (!seen.emplace(c.row, c.col).second) throw ValidationError("collab features: duplicate cell");
  }
}

std::shared_ptr<const SparseMatrix> pool_operator(int height, int width) {
  const int h = ceil_half(height), w = ceil_half(width);
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int r1 = std::min(2 * r + 2, height), c1 = std::min(2 * c + 2, width);
      const double n = static_cast<double>((r1 - 2 * r) * (c1 - 2 * c));
      for (int fr = 2 * r; fr < r1; ++fr) {
        for (int fc = 2 * c; fc < c1; ++fc) trip.emplace_back(r * w + c, fr * width + fc, 1.0 / n);
      }
    }
  }
  auto op = std::make_shared<SparseMatrix>(h * w, height * width);
  op->setFromTriplets(trip.begin(), trip.end());
  return op;
}

std::shared_ptr<const SparseMatrix> upsample_operator(int height, int width, int factor) {
  if (factor < 1) throw ValidationError("upsample_operator: factor must be >= 1");
  const int w = (width + factor - 1) / factor;
  const int h = (height + factor - 1) / factor;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) trip.emplace_back(r * width + c, (r / factor) * w + c / factor, 1.0);
  }
  auto op = std::make_shared<SparseMatrix>(height * width, h * w);
  op->setFromTriplets(trip.begin(), trip.end());
  return op;
}

SparseCollabFeatures pool_sparse(const SparseCollabFeatures& fine) {
  SparseCollabFeatures out;
  out.collaborator = fine.collaborator;
  if (fine.cells.empty()) return out;
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < fine.cells.size(); ++i) {
    groups[{fine.cells[i].row / 2, fine.cells[i].col / 2}].push_back(i);
  }
  std::vector<Eigen::Triplet<double>> trip;
  int k = 0;
  for (const auto& [cell, members] : groups) {
    CollabCell cc{cell.first, cell.second, 0.0, 0.0};
    const double n = static_cast<double>(members.size());
    for (std::size_t i : members) {
      cc.pos_row += fine.cells[i].pos_row / 2.0 / n;
      cc.pos_col += fine.cells[i].pos_col / 2.0 / n;
      trip.emplace_back(k, static_cast<int>(i), 1.0 / n);
    }
    out.cells.push_back(cc);
    ++k;
  }
  auto op = std::make_shared<SparseMatrix>(k, static_cast<Eigen::Index>(fine.cells.size()));
  op->setFromTriplets(trip.begin(), trip.end());
  out.values = numerics::sparse_apply(op, fine.values);
  return out;
}

ScalePyramid multiscale_encode(const Var& ego, int height, int width,
                               std::span<const SparseCollabFeatures> collabs) {
  if (height < 4 || width < 4) throw ValidationError("multiscale_encode: grid must be at least 4 x 4");
  if (ego.rows() != static_cast<Eigen::Index>(height) * width) {
    throw ValidationError("multiscale_encode: ego map does not match grid");
  }
  ScalePyramid p;
  p.levels[0] = ScaleLevel{height, width, ego, {collabs.begin(), collabs.end()}};
  for (const SparseCollabFeatures& c : collabs) c.validate(height, width);
  for (std::size_t s = 1; s < 3; ++s) {
    const ScaleLevel& prev = p.levels[s - 1];
    ScaleLevel& cur = p.levels[s];
    cur.height = ceil_half(prev.height);
    cur.width = ceil_half(prev.width);
    cur.ego = numerics::sparse_apply(pool_operator(prev.height, prev.width), prev.ego);
    for (const SparseCollabFeatures& c : prev.collabs) cur.collabs.push_back(pool_sparse(c));
  }
  return p;
}

Var moa(ParamBinder& bind, const Var& ego, int height, int width, std::span<const SparseCollabFeatures> collabs,
        int window, const numerics::MlpParams& q_mlp, bool offset_aware) {
  if (window < 1 || window % 2 == 0) throw ValidationError("moa: window must be odd");
  const Eigen::Index n = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index ch = ego.cols();
  if (ego.rows() != n) throw ValidationError("moa: ego map does not match grid");
  Tape& tape = ego.tape();
  const Var parts[] = {ego, zeros_like_rows(tape, n, 3)};
  const Var passthrough = numerics::concat_cols(parts);

  // Pool every collaborator into one key set ordered by (collaborator, cell).
  std::vector<const SparseCollabFeatures*> order;
  for (const SparseCollabFeatures& c : collabs) {
    c.validate(height, width);
    if (c.values.valid() && !c.cells.empty() && c.values.cols() != ch) {
      throw ValidationError("moa: collaborator channel count differs from ego");
    }
    if (!c.cells.empty()) order.push_back(&c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->collaborator < b->collaborator; });
  struct Key {
    int row, col;
    double pos_row, pos_col;
  };
  std::vector<Key> keys;
  std::vector<Var> value_parts;
  for (const SparseCollabFeatures* c : order) {
    std::vector<std::size_t> idx(c->cells.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [c](std::size_t a, std::size_t b) {
      return std::pair(c->cells[a].row, c->cells[a].col) < std::pair(c->cells[b].row, c->cells[b].col);
    });
    std::vector<Eigen::Index> rows(idx.begin(), idx.end());
    value_parts.push_back(numerics::gather_rows(c->values, rows));
    for (std::size_t i : idx) {
      const CollabCell& cc = c->cells[i];
      keys.push_back({cc.row, cc.col, cc.pos_row, cc.pos_col});
    }
  }
  if (keys.empty()) return passthrough;
  const Var received = numerics::concat_rows(value_parts);

  std::vector<std::vector<Eigen::Index>> by_cell(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    by_cell[static_cast<std::size_t>(keys[k].row * width + keys[k].col)].push_back(static_cast<Eigen::Index>(k));
  }
  const int half = window / 2;
  numerics::NeighborLists lists;
  std::vector<Eigen::Index> gather;
  std::vector<double> delta;
  std::vector<Eigen::Index> local;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      local.clear();
      for (int rr = std::max(0, r - half); rr <= std::min(height - 1, r + half); ++rr) {
        for (int cc = std::max(0, c - half); cc <= std::min(width - 1, c + half); ++cc) {
          const auto& b = by_cell[static_cast<std::size_t>(rr * width + cc)];
          local.insert(local.end(), b.begin(), b.end());
        }
      }
      std::sort(local.begin(), local.end());
      for (Eigen::Index k : local) {
        lists.index.push_back(static_cast<Eigen::Index>(gather.size()));
        gather.push_back(k);
        const double dr = offset_aware ? keys[static_cast<std::size_t>(k)].pos_row - (r + 0.5) : 0.0;
        const double dc = offset_aware ? keys[static_cast<std::size_t>(k)].pos_col - (c + 0.5) : 0.0;
        delta.insert(delta.end(), {dr, dc, dr * dr + dc * dc});
      }
      lists.offsets.push_back(static_cast<Eigen::Index>(lists.index.size()));
    }
  }
  if (gather.empty()) return passthrough;
  const Matrix dmat = Eigen::Map<const Matrix>(delta.data(), static_cast<Eigen::Index>(gather.size()), 3);
  const Var key_parts[] = {numerics::gather_rows(received, gather), tape.constant(dmat)};
  const Var pairs = numerics::concat_cols(key_parts);
  q_mlp.validate();
  if (q_mlp.input_dim() != ch || q_mlp.output_dim() != ch + 3) {
    throw ValidationError("moa: query MLP must map C -> C+3");
  }
  const Var query = numerics::mlp_apply(bind, q_mlp, ego);
  return numerics::neighborhood_attention(query, pairs, pairs, lists, passthrough);
}

MofParams MofParams::structured(int channels, double sharpness) {
  if (channels < 8) throw ValidationError("MofParams: structured init needs at least 8 channels");
  const int c = channels, d = c + 3;
  MofParams p;
  for (numerics::MlpParams& q : p.query) {
    numerics::Layer l{Matrix::Zero(c, d), Matrix::Zero(1, d), numerics::Activation::Identity};
    l.bias(0, d - 1) = -sharpness * std::sqrt(static_cast<double>(d));
    q.layers = {l};
  }
  numerics::Layer proj{Matrix::Zero(4 * c + 9, c), Matrix::Zero(1, c), numerics::Activation::Identity};
  const int moa1 = c;
  for (int j = 0; j < 7; ++j) proj.weight(moa1 + j, j) = 1.0;
  proj.weight(moa1 + c + 1, 2) = 1.0;  // dcol
  proj.weight(moa1 + c, 3) = 1.0;      // drow
  proj.weight(moa1 + c + 2, 7) = 1.0;
  for (int j = 0; j < 8 && 8 + j < c; ++j) proj.weight(j, 8 + j) = 1.0;
  p.projection.layers = {proj};
  return p;
}

MofParams MofParams::identity_slice(int channels) {
  MofParams p = structured(std::max(channels, 8));
  const int c = channels, d = c + 3;
  for (numerics::MlpParams& q : p.query) {
    q.layers = {numerics::Layer{Matrix::Zero(c, d), Matrix::Zero(1, d), numerics::Activation::Identity}};
  }
  numerics::Layer proj{Matrix::Zero(4 * c + 9, c), Matrix::Zero(1, c), numerics::Activation::Identity};
  proj.weight.topRows(c).setIdentity();
  p.projection.layers = {proj};
  return p;
}

void MofParams::validate(int channels) const {
  for (const numerics::MlpParams& q : query) {
    q.validate();
    if (q.input_dim() != channels || q.output_dim() != channels + 3) {
      throw ValidationError("MofParams: query MLP must map C -> C+3");
    }
  }
  projection.validate();
  if (projection.input_dim() != 4 * channels + 9 || projection.output_dim() != channels) {
    throw ValidationError("MofParams: projection must map 4C+9 -> C");
  }
}

void MofOptions::validate() const {
  if (window < 1 || window % 2 == 0) throw ValidationError("mof: window must be odd");
}

Var mof(ParamBinder& bind, const MofParams& params, const Var& ego, const scene::GridSpec& grid,
        std::span<const SparseCollabFeatures> collabs, const MofOptions& options) {
  options.validate();
  const int c = grid.channels;
  if (ego.cols() != c || ego.rows() != grid.num_cells()) throw ValidationError("mof: ego map does not match grid");
  params.validate(c);
  Tape& tape = ego.tape();
  const ScalePyramid pyr = multiscale_encode(ego, grid.height, grid.width, collabs);
  std::vector<Var> parts{ego};
  for (std::size_t s = 0; s < 3; ++s) {
    const ScaleLevel& lv = pyr.levels[s];
    if (s > 0 && !options.multiscale) {
      parts.push_back(zeros_like_rows(tape, grid.num_cells(), c + 3));
      continue;
    }
    Var fused = moa(bind, lv.ego, lv.height, lv.width, lv.collabs, options.window, params.query[s],
                    options.offset_aware);
    if (s > 0) fused = numerics::sparse_apply(upsample_operator(grid.height, grid.width, 1 << s), fused);
    parts.push_back(fused);
  }
  return numerics::mlp_apply(bind, params.projection, numerics::concat_cols(parts));
}

}  // namespace mmcoop::fusion
