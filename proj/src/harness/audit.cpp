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

#include "mmcoop/harness/audit.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "mmcoop/cfg/filter.hpp"
#include "mmcoop/detection/heads.hpp"
#include "mmcoop/error.hpp"
#include "mmcoop/fusion/late.hpp"
#include "mmcoop/fusion/mid.hpp"
#include "mmcoop/numerics/gradcheck.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop::harness {

using numerics::Matrix;
using numerics::MlpParams;
using numerics::ParamBinder;
using numerics::ScalarGraph;
using numerics::Tape;
using numerics::Var;

namespace {

constexpr auto kId = numerics::Activation::Identity;

Matrix rand(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

MlpParams layer(Rng& rng, Eigen::Index in, Eigen::Index out, double gain = 1.0) {
  return MlpParams{{numerics::Layer{rand(rng, in, out, -gain, gain), rand(rng, 1, out, -0.3, 0.3), kId}}};
}

Var weighted(Tape& t, const Var& v, const Matrix& mix) { return numerics::sum(numerics::hadamard(v, t.constant(mix))); }

bool near_integer(const Matrix& m, double margin) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double f = m.data()[i] - std::floor(m.data()[i]);
    if (f < margin || f > 1 - margin) return true;
  }
  return false;
}

bool near_unit(const Matrix& r, double margin) {
  return ((r.array().abs() - 1.0).abs() < margin).any();
}

struct Instance {
  ScalarGraph graph;
  std::vector<Matrix> params;
};

using Builder = std::function<Instance(Rng&)>;

// Leaves are captured by value so instances own their data.
Instance attention(Rng& rng) {
  const numerics::NeighborLists nb{{0, 2, 2, 5}, {0, 1, 3, 2, 0}};
  Instance in;
  in.params = {rand(rng, 1, 4), rand(rng, 3, 4), rand(rng, 3, 2), rand(rng, 3, 4), rand(rng, 4, 4), rand(rng, 4, 2)};
  const Matrix mix = rand(rng, 3, 2), pass = rand(rng, 3, 2);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    const Var a = numerics::cross_attention(v[0], v[1], v[2]);
    const Var b = numerics::neighborhood_attention(v[3], v[4], v[5], nb, t.constant(pass));
    return numerics::add(numerics::sum(a), weighted(t, b, mix));
  };
  return in;
}

Instance mlp(Rng& rng) {
  const Eigen::Index dims[] = {3, 5, 2};
  MlpParams p = MlpParams::xavier(dims, numerics::Activation::Tanh, numerics::Activation::Sigmoid, rng);
  Instance in;
  in.params = {rand(rng, 4, 3), p.layers[0].weight, p.layers[0].bias, p.layers[1].weight};
  const Matrix mix = rand(rng, 4, 2);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder b(t, true);
    b.assign(p.layers[0].weight, v[1]);
    b.assign(p.layers[0].bias, v[2]);
    b.assign(p.layers[1].weight, v[3]);
    return weighted(t, numerics::mlp_apply(b, p, v[0]), mix);
  };
  return in;
}

fusion::SparseCollabFeatures sparse(Rng& rng, int id, int h, int w, int count) {
  fusion::SparseCollabFeatures s;
  s.collaborator = id;
  std::vector<int> cells(static_cast<std::size_t>(h * w));
  for (int i = 0; i < h * w; ++i) cells[static_cast<std::size_t>(i)] = i;
  std::shuffle(cells.begin(), cells.end(), rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    const int k = cells[static_cast<std::size_t>(i)];
    s.cells.push_back({k / w, k % w, k / w + u(rng), k % w + u(rng)});
  }
  return s;
}

Instance moa(Rng& rng) {
  const int h = 5, w = 5, c = 3;
  const MlpParams q = layer(rng, c, c + 3, 0.7);
  const fusion::SparseCollabFeatures a = sparse(rng, 1, h, w, 4), b = sparse(rng, 2, h, w, 4);
  Instance in;
  in.params = {rand(rng, h * w, c), rand(rng, 4, c), rand(rng, 4, c), q.layers[0].weight};
  const Matrix mix = rand(rng, h * w, c + 3);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(q.layers[0].weight, v[3]);
    fusion::SparseCollabFeatures ca = a, cb = b;
    ca.values = v[1];
    cb.values = v[2];
    const fusion::SparseCollabFeatures cs[] = {ca, cb};
    return weighted(t, fusion::moa(bind, v[0], h, w, cs, 3, q), mix);
  };
  return in;
}

Instance mof(Rng& rng) {
  const scene::GridSpec g{8, 8, 1.0, 3};
  fusion::MofParams p;
  for (MlpParams& q : p.query) q = layer(rng, 3, 6, 0.7);
  p.projection = layer(rng, 21, 3, 0.5);
  const fusion::SparseCollabFeatures proto = sparse(rng, 1, 8, 8, 10);
  Instance in;
  in.params = {rand(rng, 64, 3), rand(rng, 10, 3), p.query[0].layers[0].weight, p.query[2].layers[0].weight,
               p.projection.layers[0].weight};
  const Matrix mix = rand(rng, 64, 3);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(p.query[0].layers[0].weight, v[2]);
    bind.assign(p.query[2].layers[0].weight, v[3]);
    bind.assign(p.projection.layers[0].weight, v[4]);
    fusion::SparseCollabFeatures c = proto;
    c.values = v[1];
    const fusion::SparseCollabFeatures cs[] = {c};
    return weighted(t, fusion::mof(bind, p, v[0], g, cs), mix);
  };
  return in;
}

Instance dba(Rng& rng) {
  const int h = 5, w = 5, c = 3, d = 4, n = 4;
  const scene::GridSpec g{h, w, 1.0, c};
  fusion::DbaParams p;
  p.heads = 2;
  p.points = 2;
  Matrix feats;
  do {
    feats = rand(rng, n, d);
    p.offsets = layer(rng, d, 8, 2.0);
  } while (near_integer(numerics::mlp_apply(p.offsets, feats), 0.02));
  p.weights = layer(rng, d, 4);
  p.w_alpha = rand(rng, 2 * c, d);
  std::vector<fusion::BoxEntry> entries;
  for (int i = 0; i < n; ++i) entries.push_back({static_cast<int>(rng() % h), static_cast<int>(rng() % w), std::size_t(i)});
  Instance in;
  in.params = {feats, rand(rng, h * w, c), p.offsets.layers[0].weight, p.weights.layers[0].weight, p.w_alpha};
  const Matrix mix = rand(rng, n, d);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(p.offsets.layers[0].weight, v[2]);
    bind.assign(p.weights.layers[0].weight, v[3]);
    bind.assign(p.w_alpha, v[4]);
    fusion::BoxFeatureMap m;
    m.entries = entries;
    m.features = v[0];
    return weighted(t, fusion::dba(bind, m, v[1], g, p), mix);
  };
  return in;
}

Instance bfc(Rng& rng) {
  const int n = 4, d = 4;
  fusion::BfcParams p;
  Matrix x;
  for (;;) {
    x = rand(rng, n, d);
    p.wq = rand(rng, d, d, -0.5, 0.5);
    p.wk = rand(rng, d, d, -0.5, 0.5);
    p.wv = rand(rng, d, d, -0.5, 0.5);
    p.wo = rand(rng, d, d, -0.5, 0.5);
    const Eigen::Index dims[] = {d, d, d};
    p.ffn = MlpParams::xavier(dims, numerics::Activation::Relu, kId, rng);
    Tape scratch;
    ParamBinder b(scratch, false);
    const Matrix x1 = fusion::bfc_attention(b, scratch.constant(x), p).value();
    const Matrix pre = (x1 * p.ffn.layers[0].weight).rowwise() + p.ffn.layers[0].bias.row(0);
    if ((pre.array().abs() > 0.02).all()) break;
  }
  p.score = layer(rng, d, 1, 0.5);
  p.offset = layer(rng, d, 3, 0.5);
  Instance in;
  in.params = {x, p.wq, p.wk, p.wv, p.wo, p.ffn.layers[1].weight, p.score.layers[0].weight, p.offset.layers[0].weight};
  const Matrix ms = rand(rng, n, 1), mo = rand(rng, n, 3);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(p.wq, v[1]);
    bind.assign(p.wk, v[2]);
    bind.assign(p.wv, v[3]);
    bind.assign(p.wo, v[4]);
    bind.assign(p.ffn.layers[1].weight, v[5]);
    bind.assign(p.score.layers[0].weight, v[6]);
    bind.assign(p.offset.layers[0].weight, v[7]);
    const fusion::CalibrationOutput o = fusion::bfc_forward(bind, v[0], p, fusion::BfcConfig{});
    return numerics::add(weighted(t, o.score, ms), weighted(t, o.offsets, mo));
  };
  return in;
}

Instance heads(Rng& rng) {
  const int cells = 12, c = 8;
  detection::DetectionHeads h = detection::DetectionHeads::initial(c, 0.1);
  h.reg.layers[0].weight = rand(rng, c, 7, -0.5, 0.5);
  h.cls.layers[0].weight = rand(rng, c, 2, -0.5, 0.5);
  Instance in;
  in.params = {rand(rng, cells, c), h.reg.layers[0].weight, h.reg.layers[0].bias, h.cls.layers[0].weight,
               h.cls.layers[0].bias};
  const Matrix mr = rand(rng, cells, 7), mc = rand(rng, cells, 2);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(h.reg.layers[0].weight, v[1]);
    bind.assign(h.reg.layers[0].bias, v[2]);
    bind.assign(h.cls.layers[0].weight, v[3]);
    bind.assign(h.cls.layers[0].bias, v[4]);
    const detection::HeadOutputs o = detection::decode_heads(bind, h, v[0]);
    return numerics::add(weighted(t, o.reg, mr), weighted(t, o.cls, mc));
  };
  return in;
}

detection::DetectionTargets random_targets(Rng& rng, int cells) {
  detection::DetectionTargets tg;
  for (int i = 0; i < cells; ++i) tg.positive.push_back(rng() % 3 == 0 ? 1.0 : 0.0);
  tg.positive[0] = 1.0;
  tg.reg = rand(rng, cells, 7, -1.5, 1.5);
  return tg;
}

Instance loss_reg(Rng& rng) {
  const int cells = 10;
  detection::DetectionTargets tg;
  Matrix reg;
  do {
    tg = random_targets(rng, cells);
    reg = rand(rng, cells, 7, -1.5, 1.5);
  } while (near_unit(reg - tg.reg, 0.01));
  Instance in;
  in.params = {reg};
  in.graph = [=](Tape& t, std::span<const Var> v) {
    const detection::HeadOutputs h{v[0], t.constant(Matrix::Zero(cells, 2))};
    return detection::regression_loss(t, h, tg);
  };
  return in;
}

Instance loss_cls(Rng& rng) {
  const int cells = 10;
  const detection::DetectionTargets tg = random_targets(rng, cells);
  Instance in;
  in.params = {rand(rng, cells, 2, -3, 3)};
  in.graph = [=](Tape& t, std::span<const Var> v) {
    const detection::HeadOutputs h{t.constant(Matrix::Zero(cells, 7)), v[0]};
    return detection::classification_loss(h, tg);
  };
  return in;
}

fusion::BfcTargets random_box_targets(Rng& rng, int n) {
  fusion::BfcTargets tg;
  for (int i = 0; i < n; ++i) tg.positive.push_back(rng() % 2 == 0 ? 1.0 : 0.0);
  tg.positive[0] = 1.0;
  tg.offsets = rand(rng, n, 3, -2, 2);
  return tg;
}

Instance loss_off(Rng& rng) {
  const int n = 6;
  fusion::BfcTargets tg;
  Matrix off;
  do {
    tg = random_box_targets(rng, n);
    off = rand(rng, n, 3, -2, 2);
  } while (near_unit(off - tg.offsets, 0.01));
  Instance in;
  in.params = {off};
  in.graph = [=](Tape& t, std::span<const Var> v) {
    fusion::CalibrationOutput o{t.constant(Matrix::Zero(n, 1)), t.constant(Matrix::Constant(n, 1, 0.5)), v[0]};
    return fusion::bfc_losses(t, o, tg).offset;
  };
  return in;
}

Instance loss_score(Rng& rng) {
  const int n = 6;
  const fusion::BfcTargets tg = random_box_targets(rng, n);
  Instance in;
  in.params = {rand(rng, n, 1, -2, 2)};
  in.graph = [=](Tape& t, std::span<const Var> v) {
    const Var logit = numerics::scale(v[0], 2.0);
    fusion::CalibrationOutput o{logit, numerics::sigmoid(logit), t.constant(Matrix::Zero(n, 3))};
    return fusion::bfc_losses(t, o, tg).score;
  };
  return in;
}

Instance confidence(Rng& rng) {
  const int h = 4, w = 5, c = 3;
  cfg::ConfidenceHeads heads{layer(rng, c, 1), layer(rng, c, 1)};
  Instance in;
  in.params = {rand(rng, h * w, c), heads.feature.layers[0].weight, heads.box.layers[0].weight};
  const Matrix mf = rand(rng, h * w, 1), mb = rand(rng, h * w, 1);
  in.graph = [=](Tape& t, std::span<const Var> v) {
    ParamBinder bind(t, true);
    bind.assign(heads.feature.layers[0].weight, v[1]);
    bind.assign(heads.box.layers[0].weight, v[2]);
    const cfg::ConfidenceMaps m = cfg::confidence_heads(bind, heads, v[0]);
    return numerics::add(weighted(t, cfg::gaussian_smooth(m.c_f, h, w, 3, 1.0), mf), weighted(t, m.c_b, mb));
  };
  return in;
}

}  // namespace

std::vector<AuditEntry> gradcheck_audit(int seeds, std::uint64_t base_seed, double eps) {
  if (seeds < 1) throw ValidationError("gradcheck: seeds must be >= 1");
  if (!(eps > 0)) throw ValidationError("gradcheck: eps must be > 0");
  const std::vector<std::pair<std::string, Builder>> ops = {
      {"attention", attention}, {"mlp", mlp},       {"moa", moa},           {"mof", mof},
      {"dba", dba},             {"bfc", bfc},       {"heads", heads},       {"loss_reg", loss_reg},
      {"loss_cls", loss_cls},   {"loss_off", loss_off}, {"loss_score", loss_score}, {"confidence", confidence}};
  std::vector<AuditEntry> out;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    AuditEntry e;
    e.op = ops[k].first;
    for (int s = 0; s < seeds; ++s) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
      Rng rng = make_rng(seed, {0xa0d17, k});
      const Instance in = ops[k].second(rng);
      const double err = numerics::grad_check(in.graph, in.params, eps).max_error;
      if (err > e.max_error || e.instances == 0) {
        e.max_error = err;
        e.worst_seed = seed;
      }
      ++e.instances;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace mmcoop::harness
