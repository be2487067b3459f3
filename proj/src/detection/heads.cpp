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

#include "mmcoop/detection/heads.hpp"

#include <algorithm>
#include <cmath>

#include "mmcoop/error.hpp"

namespace mmcoop::detection {

using numerics::MlpParams;
using numerics::Tape;

void AnchorSpec::validate() const {
  if (!(l0 > 0 && w0 > 0 && h0 > 0) || !std::isfinite(z0)) throw ValidationError("anchor: invalid template");
}

Eigen::Matrix<double, 7, 1> encode_box(const BBox7& box, const AnchorSpec& a, const scene::GridSpec& g, int row,
                                       int col) {
  const Eigen::Vector2d c = g.cell_center(row, col);
  Eigen::Matrix<double, 7, 1> e;
  e << (box.x - c.x()) / g.cell_size, (box.y - c.y()) / g.cell_size, (box.z - a.z0) / g.cell_size,
      std::log(box.l / a.l0), std::log(box.w / a.w0), std::log(box.h / a.h0), geometry::normalize_angle(box.yaw);
  return e;
}

BBox7 decode_box(const Eigen::Matrix<double, 7, 1>& code, const AnchorSpec& a, const scene::GridSpec& g, int row,
                 int col) {
  const Eigen::Vector2d c = g.cell_center(row, col);
  BBox7 b;
  b.x = c.x() + code(0) * g.cell_size;
  b.y = c.y() + code(1) * g.cell_size;
  b.z = a.z0 + code(2) * g.cell_size;
  b.l = a.l0 * std::exp(code(3));
  b.w = a.w0 * std::exp(code(4));
  b.h = a.h0 * std::exp(code(5));
  b.yaw = geometry::normalize_angle(code(6));
  return b;
}

DetectionHeads DetectionHeads::initial(int channels, double prior) {
  if (channels < 8) throw ValidationError("detection heads: need at least 8 channels");
  if (!(prior > 0 && prior < 1)) throw ValidationError("detection heads: prior must be in (0, 1)");
  DetectionHeads h;
  numerics::Layer reg{Matrix::Zero(channels, 7), Matrix::Zero(1, 7), numerics::Activation::Identity};
  reg.weight(2, 0) = 1.0;
  reg.weight(3, 1) = 1.0;
  reg.weight(5, 6) = 1.0;
  h.reg.layers = {reg};
  numerics::Layer cls{Matrix::Zero(channels, 2), Matrix::Zero(1, 2), numerics::Activation::Identity};
  cls.bias(0, 0) = std::log(prior / (1.0 - prior));
  h.cls.layers = {cls};
  return h;
}

void DetectionHeads::validate(Eigen::Index channels) const {
  reg.validate();
  cls.validate();
  if (reg.input_dim() != channels || reg.output_dim() != 7) throw ValidationError("detection heads: reg must map C -> 7");
  if (cls.input_dim() != channels || cls.output_dim() != 2) throw ValidationError("detection heads: cls must map C -> 2");
}

HeadOutputs decode_heads(numerics::ParamBinder& bind, const DetectionHeads& heads, const Var& features) {
  heads.validate(features.cols());
  return {numerics::mlp_apply(bind, heads.reg, features), numerics::mlp_apply(bind, heads.cls, features)};
}

Eigen::VectorXd foreground_scores(const Matrix& cls) {
  if (cls.cols() != 2) throw ValidationError("foreground_scores: expected two logits per cell");
  Eigen::VectorXd s(cls.rows());
  for (Eigen::Index i = 0; i < cls.rows(); ++i) {
    const double z = cls(i, 0) - cls(i, 1);
    s(i) = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return s;
}

std::vector<DecodedBox> decode_boxes(const Matrix& reg, const Matrix& cls, const AnchorSpec& a,
                                     const scene::GridSpec& g, double score_floor) {
  if (!(score_floor >= 0 && score_floor <= 1)) throw ValidationError("decode_boxes: score floor must be in [0, 1]");
  if (reg.rows() != g.num_cells() || reg.cols() != 7 || cls.rows() != g.num_cells()) {
    throw ValidationError("decode_boxes: head outputs do not match grid");
  }
  const Eigen::VectorXd s = foreground_scores(cls);
  std::vector<DecodedBox> out;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const int i = g.flat(r, c);
      if (s(i) < score_floor) continue;
      BBox7 b = decode_box(reg.row(i).transpose(), a, g, r, c);
      b.score = s(i);
      out.push_back({b, r, c});
    }
  }
  return out;
}

std::size_t DetectionTargets::num_positive() const {
  return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1.0));
}

DetectionTargets build_targets(std::span<const BBox7> truth, const AnchorSpec& a, const scene::GridSpec& g) {
  DetectionTargets t;
  t.positive.assign(static_cast<std::size_t>(g.num_cells()), 0.0);
  t.reg = Matrix::Zero(g.num_cells(), 7);
  for (const BBox7& b : truth) {
    const auto cell = g.cell_of(b.x, b.y);
    if (!cell) continue;
    const int i = g.flat(cell->row, cell->col);
    if (t.positive[static_cast<std::size_t>(i)] == 1.0) continue;
    t.positive[static_cast<std::size_t>(i)] = 1.0;
    t.reg.row(i) = encode_box(b, a, g, cell->row, cell->col).transpose();
  }
  return t;
}

Var regression_loss(Tape& tape, const HeadOutputs& h, const DetectionTargets& t) {
  std::vector<Eigen::Index> pos;
  for (std::size_t i = 0; i < t.positive.size(); ++i) {
    if (t.positive[i] == 1.0) pos.push_back(static_cast<Eigen::Index>(i));
  }
  if (pos.empty()) return tape.constant(Matrix::Zero(1, 1));
  Matrix want(static_cast<Eigen::Index>(pos.size()), 7);
  for (std::size_t k = 0; k < pos.size(); ++k) want.row(static_cast<Eigen::Index>(k)) = t.reg.row(pos[k]);
  const Var diff = numerics::sub(numerics::gather_rows(h.reg, pos), tape.constant(want));
  return numerics::scale(numerics::sum(numerics::smooth_l1(diff)), 1.0 / static_cast<double>(pos.size()));
}

Var classification_loss(const HeadOutputs& h, const DetectionTargets& t, double alpha, double gamma) {
  if (static_cast<std::size_t>(h.cls.rows()) != t.positive.size()) {
    throw ValidationError("classification_loss: targets do not match head outputs");
  }
  const Var margin = numerics::sub(numerics::slice_cols(h.cls, 0, 1), numerics::slice_cols(h.cls, 1, 1));
  const double norm = static_cast<double>(std::max<std::size_t>(1, t.num_positive()));
  return numerics::scale(numerics::focal_loss_sum(margin, t.positive, alpha, gamma), 1.0 / norm);
}

LossTerms total_loss(Tape& tape, const HeadOutputs& h, const DetectionTargets& t, const fusion::BfcLosses& bfc) {
  LossTerms l;
  l.reg = regression_loss(tape, h, t);
  l.cls = classification_loss(h, t);
  l.off = bfc.offset;
  l.score = bfc.score;
  l.total = numerics::add(numerics::add(l.reg, l.cls), numerics::add(l.off, l.score));
  return l;
}

}  // namespace mmcoop::detection
