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

#include "mmcoop/fusion/late.hpp"

#include <algorithm>
#include <cmath>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"

namespace mmcoop::fusion {

using numerics::MlpParams;
using numerics::ParamBinder;
using numerics::Tape;

namespace {

constexpr auto kIdentity = numerics::Activation::Identity;

MlpParams zero_layer(Eigen::Index in, Eigen::Index out) {
  const Eigen::Index dims[] = {in, out};
  return MlpParams::zeros(dims, kIdentity, kIdentity);
}

void expect_map(const MlpParams& p, Eigen::Index in, Eigen::Index out, const char* what) {
  p.validate();
  if (p.input_dim() != in || p.output_dim() != out) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(in) + " -> " + std::to_string(out));
  }
}

}  // namespace

Matrix box_inputs(std::span<const BBox7> boxes, const scene::GridSpec& grid) {
  const double hx = grid.width * grid.cell_size / 2.0;
  const double hy = grid.height * grid.cell_size / 2.0;
  Matrix m(static_cast<Eigen::Index>(boxes.size()), 7);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BBox7& b = boxes[i];
    m.row(static_cast<Eigen::Index>(i)) << b.x / hx, b.y / hy, b.z, b.l, b.w, b.h, b.yaw;
  }
  return m;
}

BoxFeatureMap encode_boxes(ParamBinder& bind, std::span<const BBox7> boxes, const MlpParams& enc,
                           const scene::GridSpec& grid, const Var* gates) {
  grid.validate();
  enc.validate();
  if (enc.input_dim() != 7) throw ValidationError("encode_boxes: encoder must take 7 inputs");
  if (gates && gates->rows() != static_cast<Eigen::Index>(boxes.size())) {
    throw ValidationError("encode_boxes: one gate per box required");
  }
  BoxFeatureMap out;
  std::vector<BBox7> kept;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto cell = grid.cell_of(boxes[i].x, boxes[i].y);
    if (!cell) {
      ++out.dropped;
      continue;
    }
    out.entries.push_back({cell->row, cell->col, i});
    kept.push_back(boxes[i]);
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  Tape& tape = bind.tape();
  if (kept.empty()) {
    out.features = tape.constant(Matrix::Zero(0, enc.output_dim()));
    return out;
  }
  out.features = numerics::mlp_apply(bind, enc, tape.constant(box_inputs(kept, grid)));
  if (gates) out.features = numerics::scale_rows(out.features, numerics::gather_rows(*gates, rows));
  return out;
}

void DbaParams::validate(Eigen::Index d, Eigen::Index c) const {
  if (heads < 1 || points < 1) throw ValidationError("dba: heads and points must be >= 1");
  expect_map(offsets, d, heads * points * 2, "dba offsets");
  expect_map(weights, d, heads * points, "dba weights");
  if (w_alpha.rows() != heads * c || w_alpha.cols() != d) throw ValidationError("dba: W_alpha must be (A*C) x D");
}

Var dba(ParamBinder& bind, const BoxFeatureMap& boxes, const Var& fused, const scene::GridSpec& grid,
        const DbaParams& params) {
  const Eigen::Index n = static_cast<Eigen::Index>(boxes.size());
  const Eigen::Index c = fused.cols();
  if (fused.rows() != grid.num_cells()) throw ValidationError("dba: fused map does not match grid");
  if (n == 0) return boxes.features;
  const Eigen::Index d = boxes.features.cols();
  params.validate(d, c);
  const Eigen::Index am = params.heads * params.points;

  Matrix base(n * am, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const BoxEntry& e = boxes.entries[static_cast<std::size_t>(i)];
    base.middleRows(i * am, am).col(0).setConstant(e.row);
    base.middleRows(i * am, am).col(1).setConstant(e.col);
  }
  const Var off = numerics::reshape(numerics::mlp_apply(bind, params.offsets, boxes.features), n * am, 2);
  const Var reads = numerics::bilinear_sample(fused, grid.height, grid.width, base, off);
  const Var logits = numerics::reshape(numerics::mlp_apply(bind, params.weights, boxes.features), n * params.heads,
                                       params.points);
  const Var agg = numerics::group_weighted_sum(numerics::softmax_rows(logits), reads);
  const Var per_box = numerics::reshape(agg, n, params.heads * c);
  return numerics::add(numerics::matmul(per_box, bind(params.w_alpha)), boxes.features);
}

void BfcParams::validate(Eigen::Index d) const {
  if (heads < 1 || d % heads != 0) throw ValidationError("bfc: feature width must divide into heads");
  for (const Matrix* m : {&wq, &wk, &wv, &wo}) {
    if (m->rows() != d || m->cols() != d) throw ValidationError("bfc: attention weights must be D x D");
  }
  expect_map(ffn, d, d, "bfc ffn");
  expect_map(score, d, 1, "bfc score head");
  expect_map(offset, d, 3, "bfc offset head");
}

void BfcConfig::validate() const {
  if (!(score_thresh >= 0 && score_thresh <= 1)) throw ValidationError("bfc: score_thresh must be in [0, 1]");
  if (!(max_xy_offset >= 0) || !(max_yaw_offset >= 0)) throw ValidationError("bfc: offset bounds must be >= 0");
}

Var bfc_attention(ParamBinder& bind, const Var& x, const BfcParams& p) {
  const Eigen::Index d = x.cols();
  const Eigen::Index dh = d / p.heads;
  const Var q = numerics::matmul(x, bind(p.wq));
  const Var k = numerics::matmul(x, bind(p.wk));
  const Var v = numerics::matmul(x, bind(p.wv));
  std::vector<Var> heads;
  for (int a = 0; a < p.heads; ++a) {
    const Var qa = numerics::slice_cols(q, a * dh, dh);
    const Var ka = numerics::slice_cols(k, a * dh, dh);
    const Var va = numerics::slice_cols(v, a * dh, dh);
    const Var s = numerics::scale(numerics::matmul(qa, numerics::transpose(ka)), 1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(numerics::matmul(numerics::softmax_rows(s), va));
  }
  return numerics::add(x, numerics::matmul(numerics::concat_cols(heads), bind(p.wo)));
}

CalibrationOutput bfc_forward(ParamBinder& bind, const Var& enhanced, const BfcParams& params,
                              const BfcConfig& cfg) {
  cfg.validate();
  Tape& tape = bind.tape();
  const Eigen::Index n = enhanced.rows();
  if (n == 0) {
    return {tape.constant(Matrix::Zero(0, 1)), tape.constant(Matrix::Zero(0, 1)), tape.constant(Matrix::Zero(0, 3))};
  }
  params.validate(enhanced.cols());
  const Var x1 = bfc_attention(bind, enhanced, params);
  const Var x2 = numerics::add(x1, numerics::mlp_apply(bind, params.ffn, x1));
  const Var u = numerics::mlp_apply(bind, params.score, x2);
  const Var v = numerics::tanh(numerics::mlp_apply(bind, params.offset, x2));
  const Matrix bounds = Eigen::Vector3d(cfg.max_xy_offset, cfg.max_xy_offset, cfg.max_yaw_offset).asDiagonal();
  CalibrationOutput out;
  out.score_logit = numerics::scale(u, 2.0);
  out.score = numerics::scale(numerics::add_scalar(numerics::tanh(u), 1.0), 0.5);
  out.offsets = numerics::matmul(v, tape.constant(bounds));
  return out;
}

std::vector<BBox7> apply_calibration(std::span<const BBox7> boxes, const BoxFeatureMap& map,
                                     const CalibrationOutput& out, const BfcConfig& cfg) {
  std::vector<BBox7> kept;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double s = std::clamp(out.score.value()(r, 0), 0.0, 1.0);
    if (s < cfg.score_thresh) continue;
    BBox7 b = boxes[map.entries[i].source];
    b.x += out.offsets.value()(r, 0);
    b.y += out.offsets.value()(r, 1);
    b.yaw = geometry::normalize_angle(b.yaw + out.offsets.value()(r, 2));
    kept.push_back(b);
  }
  return kept;
}

LateParams LateParams::initial(int channels, Rng& rng) {
  const Eigen::Index c = channels;
  LateParams p;
  p.box_encoder = MlpParams::identity(7, c);
  p.dba.offsets = zero_layer(c, p.dba.heads * p.dba.points * 2);
  p.dba.weights = zero_layer(c, p.dba.heads * p.dba.points);
  p.dba.w_alpha = Matrix::Zero(p.dba.heads * c, c);
  for (int a = 0; a < p.dba.heads; ++a) {
    for (Eigen::Index j = 0; j < 8 && 8 + j < c; ++j) p.dba.w_alpha(a * c + j, 8 + j) = 1.0 / p.dba.heads;
  }
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  auto small = [&]() {
    Matrix m(c, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  p.bfc.wq = small();
  p.bfc.wk = small();
  p.bfc.wv = small();
  p.bfc.wo = Matrix::Zero(c, c);
  const Eigen::Index ffn_dims[] = {c, c, c};
  p.bfc.ffn = MlpParams::xavier(ffn_dims, numerics::Activation::Relu, kIdentity, rng);
  p.bfc.ffn.layers.back().weight.setZero();
  p.bfc.score = zero_layer(c, 1);
  p.bfc.offset = zero_layer(c, 3);
  return p;
}

void LateParams::validate(Eigen::Index c) const {
  expect_map(box_encoder, 7, c, "box encoder");
  dba.validate(c, c);
  bfc.validate(c);
}

LateResult calibrate_boxes(ParamBinder& bind, const LateParams& params, std::span<const BBox7> boxes,
                           const Var* gates, const Var& fused, const scene::GridSpec& grid, const BfcConfig& cfg) {
  LateResult r;
  r.map = encode_boxes(bind, boxes, params.box_encoder, grid, gates);
  const Var enhanced = dba(bind, r.map, fused, grid, params.dba);
  r.output = bfc_forward(bind, enhanced, params.bfc, cfg);
  r.calibrated = apply_calibration(boxes, r.map, r.output, cfg);
  return r;
}

std::size_t BfcTargets::num_positive() const {
  return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1.0));
}

BfcTargets match_boxes(std::span<const BBox7> boxes, const BoxFeatureMap& map, std::span<const BBox7> truth,
                       double iou_thresh) {
  BfcTargets t;
  t.positive.assign(map.size(), 0.0);
  t.offsets = Matrix::Zero(static_cast<Eigen::Index>(map.size()), 3);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const BBox7& b = boxes[map.entries[i].source];
    double best = -1.0;
    std::ptrdiff_t match = -1;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      const double iou = geometry::rotated_iou_bev(b, truth[g]);
      if (iou >= iou_thresh && iou > best) {
        best = iou;
        match = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (match < 0) continue;
    const BBox7& g = truth[static_cast<std::size_t>(match)];
    t.positive[i] = 1.0;
    t.offsets.row(static_cast<Eigen::Index>(i)) << g.x - b.x, g.y - b.y, geometry::normalize_angle(g.yaw - b.yaw);
  }
  return t;
}

BfcLosses bfc_losses(Tape& tape, const CalibrationOutput& out, const BfcTargets& targets, double alpha,
                     double gamma) {
  const Var zero = tape.constant(Matrix::Zero(1, 1));
  const Eigen::Index n = out.score_logit.valid() ? out.score_logit.rows() : 0;
  if (static_cast<std::size_t>(n) != targets.positive.size()) {
    throw ValidationError("bfc_losses: targets do not match calibration output");
  }
  if (n == 0) return {zero, zero};
  std::vector<Eigen::Index> pos;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (targets.positive[static_cast<std::size_t>(i)] == 1.0) pos.push_back(i);
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, pos.size()));
  BfcLosses l;
  l.score = numerics::scale(numerics::focal_loss_sum(out.score_logit, targets.positive, alpha, gamma), 1.0 / norm);
  if (pos.empty()) {
    l.offset = zero;
  } else {
    Matrix want(static_cast<Eigen::Index>(pos.size()), 3);
    for (std::size_t k = 0; k < pos.size(); ++k) want.row(static_cast<Eigen::Index>(k)) = targets.offsets.row(pos[k]);
    const Var diff = numerics::sub(numerics::gather_rows(out.offsets, pos), tape.constant(want));
    l.offset = numerics::scale(numerics::sum(numerics::smooth_l1(diff)), 1.0 / norm);
  }
  return l;
}

std::vector<BBox7> merge_and_nms(std::span<const BBox7> ego, std::span<const BBox7> calibrated,
                                 std::span<const BBox7> fused, double iou_thresh) {
  std::vector<BBox7> all(ego.begin(), ego.end());
  all.insert(all.end(), calibrated.begin(), calibrated.end());
  all.insert(all.end(), fused.begin(), fused.end());
  std::vector<BBox7> out;
  for (std::size_t i : geometry::nms(all, iou_thresh)) out.push_back(all[i]);
  return out;
}

}  // namespace mmcoop::fusion
