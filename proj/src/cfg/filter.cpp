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

#include "mmcoop/cfg/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmcoop/error.hpp"

namespace mmcoop::cfg {

using numerics::ParamBinder;
using numerics::Tape;

void CfgConfig::validate() const {
  if (!(keep_percent >= 0 && keep_percent <= 100)) throw ValidationError("cfg: keep_percent must be in [0, 100]");
  if (!(tau > 0)) throw ValidationError("cfg: tau must be > 0");
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("cfg: kernel size must be odd");
  if (!(sigma > 0)) throw ValidationError("cfg: sigma must be > 0");
  if (!(c_min >= 0 && c_min <= 1)) throw ValidationError("cfg: c_min must be in [0, 1]");
  if (!(confidence_floor > 0)) throw ValidationError("cfg: confidence floor must be > 0");
}

ConfidenceHeads ConfidenceHeads::occupancy_prior(int channels) {
  numerics::Layer l{Matrix::Zero(channels, 1), Matrix::Constant(1, 1, -5.0), numerics::Activation::Identity};
  l.weight(0, 0) = 7.0;
  ConfidenceHeads h;
  h.feature.layers.push_back(l);
  h.box.layers.push_back(l);
  return h;
}

ConfidenceMaps confidence_heads(ParamBinder& bind, const ConfidenceHeads& heads, const Var& features) {
  for (const numerics::MlpParams* p : {&heads.feature, &heads.box}) {
    p->validate();
    if (p->input_dim() != features.cols() || p->output_dim() != 1) {
      throw ValidationError("confidence_heads: head must map C -> 1");
    }
  }
  return {numerics::sigmoid(numerics::mlp_apply(bind, heads.feature, features)),
          numerics::sigmoid(numerics::mlp_apply(bind, heads.box, features))};
}

Matrix gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0) throw ValidationError("gaussian_kernel: size must be odd");
  if (!(sigma > 0)) throw ValidationError("gaussian_kernel: sigma must be > 0");
  const int h = k / 2;
  Matrix g(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double di = i - h, dj = j - h;
      g(i, j) = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
    }
  }
  return g / g.sum();
}

namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

std::shared_ptr<const numerics::SparseMatrix> gaussian_operator(int height, int width, int k, double sigma) {
  if (height < 1 || width < 1) throw ValidationError("gaussian_operator: empty grid");
  const Matrix g = gaussian_kernel(k, sigma);
  const int h = k / 2;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(height) * width * k * k);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (int i = -h; i <= h; ++i) {
        for (int j = -h; j <= h; ++j) {
          trip.emplace_back(r * width + c, mirror(r + i, height) * width + mirror(c + j, width), g(i + h, j + h));
        }
      }
    }
  }
  auto op = std::make_shared<numerics::SparseMatrix>(height * width, height * width);
  op->setFromTriplets(trip.begin(), trip.end());
  return op;
}

Matrix gaussian_smooth(const Matrix& map, int k, double sigma) {
  const auto op = gaussian_operator(static_cast<int>(map.rows()), static_cast<int>(map.cols()), k, sigma);
  const Eigen::Map<const Eigen::VectorXd> flat(map.data(), map.size());
  const Eigen::VectorXd out = (*op) * flat;
  return Eigen::Map<const Matrix>(out.data(), map.rows(), map.cols());
}

Var gaussian_smooth(const Var& column, int height, int width, int k, double sigma) {
  if (column.rows() != static_cast<Eigen::Index>(height) * width || column.cols() != 1) {
    throw ValidationError("gaussian_smooth: expected an (H*W) x 1 column");
  }
  return numerics::sparse_apply(gaussian_operator(height, width, k, sigma), column);
}

Matrix topp_mask(const Matrix& map, double percent) {
  if (!(percent >= 0 && percent <= 100)) throw ValidationError("topp_mask: percent must be in [0, 100]");
  const auto n = static_cast<std::size_t>(map.size());
  const auto keep = static_cast<std::size_t>(std::ceil(percent * static_cast<double>(n) / 100.0));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double* v = map.data();
  std::stable_sort(order.begin(), order.end(), [v](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  Matrix mask = Matrix::Zero(map.rows(), map.cols());
  for (std::size_t i = 0; i < std::min(keep, n); ++i) mask.data()[order[i]] = 1.0;
  return mask;
}

GumbelSample gumbel_stage_select(const Var& c_f, const Var& c_b, double tau, Rng& rng, double floor) {
  if (!(tau > 0)) throw ValidationError("gumbel_stage_select: tau must be > 0");
  if (c_f.rows() != c_b.rows() || c_f.cols() != 1 || c_b.cols() != 1) {
    throw ValidationError("gumbel_stage_select: confidence maps must be matching columns");
  }
  const Eigen::Index n = c_f.rows();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto gumbel = [&]() {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    return -std::log(-std::log(u));
  };
  Matrix noise(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    noise(i, 0) = gumbel();
    noise(i, 1) = gumbel();
  }
  Tape& tape = c_f.tape();
  const Var parts[] = {numerics::log_floored(c_f, floor), numerics::log_floored(c_b, floor)};
  const Var logits = numerics::scale(numerics::add(numerics::concat_cols(parts), tape.constant(noise)), 1.0 / tau);
  const Var soft = numerics::softmax_rows(logits);

  GumbelSample out;
  out.soft = soft.value();
  out.hard = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Ties resolve to the feature stage.
    out.hard(i, logits.value()(i, 0) >= logits.value()(i, 1) ? 0 : 1) = 1.0;
  }
  out.routed = numerics::straight_through(out.hard, soft);
  return out;
}

std::size_t StageFilter::feature_cells() const { return static_cast<std::size_t>(final_f.sum()); }
std::size_t StageFilter::box_cells() const { return static_cast<std::size_t>(final_b.sum()); }

StageFilter generate_filter(ParamBinder& bind, const ConfidenceHeads& heads, const scene::FeatureMap& features,
                            const CfgConfig& cfg, Rng& rng) {
  cfg.validate();
  const int h = features.grid.height, w = features.grid.width;
  Tape& tape = bind.tape();
  const Var f = tape.constant(features.cells);
  const ConfidenceMaps conf = confidence_heads(bind, heads, f);
  const Var sf = gaussian_smooth(conf.c_f, h, w, cfg.kernel, cfg.sigma);
  const Var sb = gaussian_smooth(conf.c_b, h, w, cfg.kernel, cfg.sigma);

  auto as_map = [h, w](const Matrix& col) -> Matrix { return Eigen::Map<const Matrix>(col.data(), h, w); };
  StageFilter out;
  out.height = h;
  out.width = w;
  out.smooth_f = as_map(sf.value());
  out.smooth_b = as_map(sb.value());
  out.top_f = topp_mask(out.smooth_f, cfg.keep_percent);
  out.top_b = topp_mask(out.smooth_b, cfg.keep_percent);
  out.eligible = ((out.smooth_f.array() >= cfg.c_min) || (out.smooth_b.array() >= cfg.c_min)).cast<double>();

  const GumbelSample g = gumbel_stage_select(sf, sb, cfg.tau, rng, cfg.confidence_floor);
  out.route_f = as_map(g.hard.col(0));
  out.route_b = as_map(g.hard.col(1));
  out.soft_f = as_map(g.soft.col(0));
  out.soft_b = as_map(g.soft.col(1));
  out.final_f = out.route_f.cwiseProduct(out.top_f).cwiseProduct(out.eligible);
  out.final_b = out.route_b.cwiseProduct(out.top_b).cwiseProduct(out.eligible);

  auto as_column = [h, w](const Matrix& m) -> Matrix { return Eigen::Map<const Matrix>(m.data(), h * w, 1); };
  const Matrix keep_f = as_column(out.top_f.cwiseProduct(out.eligible));
  const Matrix keep_b = as_column(out.top_b.cwiseProduct(out.eligible));
  out.gate_f = numerics::hadamard(numerics::slice_cols(g.routed, 0, 1), tape.constant(keep_f));
  out.gate_b = numerics::hadamard(numerics::slice_cols(g.routed, 1, 1), tape.constant(keep_b));
  return out;
}

FilteredContent compose_and_apply(const scene::FeatureMap& features, const std::vector<AnchoredBox>& boxes,
                                  const StageFilter& filter) {
  const scene::GridSpec& g = features.grid;
  if (filter.height != g.height || filter.width != g.width) {
    throw ValidationError("compose_and_apply: filter and feature grids differ");
  }
  FilteredContent out;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (filter.final_f(r, c) == 1.0) {
        out.features.push_back(SelectedCell{r, c, features.cells.row(g.flat(r, c))});
        ++out.feature_cells;
      } else if (filter.final_b(r, c) == 1.0) {
        ++out.box_cells;
      } else {
        ++out.suppressed_cells;
      }
    }
  }
  for (const AnchoredBox& b : boxes) {
    if (!g.contains(b.row, b.col)) throw ValidationError("compose_and_apply: box anchor outside grid");
    if (filter.final_b(b.row, b.col) == 1.0) out.boxes.push_back(b);
  }
  return out;
}

}  // namespace mmcoop::cfg
