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

#include "mmcoop/numerics/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "mmcoop/error.hpp"

namespace mmcoop::numerics {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                          shape_str(b.value()));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ValidationError("autodiff: use of an unbound Var");
  return a.tape();
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ValidationError("autodiff: scalar() on " + shape_str(v));
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.allFinite()) throw NumericError("autodiff: non-finite leaf value");
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.allFinite()) throw NumericError("autodiff: op produced a non-finite value");
  bool needs = false;
  for (const Var& p : parents) {
    assert(&p.tape() == this);
    needs = needs || p.requires_grad();
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, false,
                        needs ? std::move(backward) : BackwardFn()});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  assert(g.rows() == n.value.rows() && g.cols() == n.value.cols());
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw ValidationError("autodiff: root belongs to another tape");
  if (root.value().size() != 1) {
    throw ValidationError("autodiff: backward root must be scalar, got " +
                          shape_str(root.value()));
  }
  for (Node& n : nodes_) {
    if (!n.is_leaf) n.grad.resize(0, 0);
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.requires_grad || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

void Tape::clear() { nodes_.clear(); }

Var ParamBinder::operator()(const Matrix& param) {
  auto it = bound_.find(&param);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(param, trainable_);
  bound_.emplace(&param, v);
  return v;
}

Matrix ParamBinder::grad_of(const Matrix& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end() || it->second.grad().size() == 0) {
    return Matrix::Zero(param.rows(), param.cols());
  }
  return it->second.grad();
}

// ---- elementwise and linear algebra -------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimension mismatch " + shape_str(a.value()) + " * " +
                          shape_str(b.value()));
  }
  Var parents[] = {a, b};
  return tape_of(a).record(a.value() * b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  Var parents[] = {a};
  return tape_of(a).record(a.value().transpose(), parents,
                           [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Var parents[] = {a, b};
  return tape_of(a).record(a.value() + b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Var parents[] = {a, b};
  return tape_of(a).record(a.value() - b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, Matrix(-g));
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Var parents[] = {a, b};
  return tape_of(a).record(a.value().cwiseProduct(b.value()), parents,
                           [a, b](Tape& t, const Matrix& g) {
                             if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
                             if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
                           });
}

Var scale(const Var& a, double s) {
  Var parents[] = {a};
  return tape_of(a).record(a.value() * s, parents,
                           [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Var parents[] = {a};
  return tape_of(a).record(a.value().array() + s, parents,
                           [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ValidationError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                          shape_str(row.value()));
  }
  Var parents[] = {a, row};
  Matrix out = a.value().rowwise() + row.value().row(0);
  return tape_of(a).record(std::move(out), parents, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ValidationError("scale_rows: expected " + std::to_string(a.rows()) + "x1 column, got " +
                          shape_str(col.value()));
  }
  Var parents[] = {a, col};
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return tape_of(a).record(std::move(out), parents, [a, col](Tape& t, const Matrix& g) {
    if (a.requires_grad()) {
      t.accumulate(a, Matrix(g.array().colwise() * col.value().col(0).array()));
    }
    if (col.requires_grad()) {
      t.accumulate(col, Matrix(g.cwiseProduct(a.value()).rowwise().sum()));
    }
  });
}

Var tanh(const Var& a) {
  Var parents[] = {a};
  Matrix y = a.value().array().tanh();
  return tape_of(a).record(y, parents, [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix(g.array() * (1.0 - y.array().square())));
  });
}

Var sigmoid(const Var& a) {
  Var parents[] = {a};
  Matrix y = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return tape_of(a).record(y, parents, [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix(g.array() * y.array() * (1.0 - y.array())));
  });
}

Var relu(const Var& a) {
  Var parents[] = {a};
  return tape_of(a).record(a.value().cwiseMax(0.0), parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix((a.value().array() > 0.0).select(g.array(), 0.0)));
  });
}

Var exp(const Var& a) {
  Var parents[] = {a};
  Matrix y = a.value().array().exp();
  return tape_of(a).record(y, parents, [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix(g.cwiseProduct(y)));
  });
}

Var log_floored(const Var& a, double floor) {
  if (!(floor > 0.0)) throw ValidationError("log_floored: floor must be positive");
  Var parents[] = {a};
  Matrix y = a.value().cwiseMax(floor).array().log();
  return tape_of(a).record(y, parents, [a, floor](Tape& t, const Matrix& g) {
    const auto& x = a.value().array();
    t.accumulate(a, Matrix((x >= floor).select(g.array() / x, 0.0)));
  });
}

Var softmax_rows(const Var& a) {
  if (a.cols() == 0) throw ValidationError("softmax_rows: empty rows");
  Var parents[] = {a};
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    y.row(r) = (a.value().row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return tape_of(a).record(y, parents, [a, y](Tape& t, const Matrix& g) {
    // dx = y * (g - <g, y>) per row
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.array() * (g.colwise() - dots).array();
    t.accumulate(a, dx);
  });
}

Var sum(const Var& a) {
  Var parents[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record(out, parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ValidationError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var smooth_l1(const Var& a, double beta) {
  if (!(beta > 0.0)) throw ValidationError("smooth_l1: beta must be positive");
  Var parents[] = {a};
  Matrix y = a.value().unaryExpr([beta](double x) {
    const double ax = std::abs(x);
    return ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
  });
  return tape_of(a).record(y, parents, [a, beta](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([beta](double x) {
      return std::abs(x) < beta ? x / beta : (x > 0 ? 1.0 : -1.0);
    });
    t.accumulate(a, Matrix(g.cwiseProduct(d)));
  });
}

Var focal_loss_sum(const Var& logits, std::span<const double> targets, double alpha,
                   double gamma) {
  if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ValidationError("focal_loss_sum: expected n x 1 logits matching targets");
  }
  std::vector<double> tgt(targets.begin(), targets.end());
  // Per row, with s = +1 for positives and -1 for negatives:
  //   p_t = sigmoid(s z), log p_t = -softplus(-s z)
  //   loss = -a_t (1 - p_t)^gamma log p_t
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  auto sig = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  const Matrix& z = logits.value();
  double total = 0.0;
  Matrix dz(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const bool pos = tgt[static_cast<std::size_t>(i)] > 0.5;
    const double s = pos ? 1.0 : -1.0;
    const double a_t = pos ? alpha : 1.0 - alpha;
    const double u = s * z(i, 0);
    const double p_t = sig(u);
    const double log_p = -softplus(-u);
    const double q = 1.0 - p_t;  // = sigmoid(-u)
    const double q_pow = std::pow(q, gamma);
    total += -a_t * q_pow * log_p;
    // d/du [-a q^g log p] with dp/du = p q, dq/du = -p q
    //   = -a [ g q^(g-1) (-p q) log p + q^g (q) ]
    //   = a q^g [ g p log p - q ]
    const double d_du = a_t * q_pow * (gamma * p_t * log_p - q);
    dz(i, 0) = s * d_du;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  Var parents[] = {logits};
  return tape_of(logits).record(out, parents, [logits, dz](Tape& t, const Matrix& g) {
    t.accumulate(logits, Matrix(dz * g(0, 0)));
  });
}

// ---- shape manipulation --------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ValidationError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts, [saved](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : saved) {
      if (p.requires_grad()) t.accumulate(p, Matrix(g.middleCols(at, p.cols())));
      at += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ValidationError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts, [saved](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : saved) {
      if (p.requires_grad()) t.accumulate(p, Matrix(g.middleRows(at, p.rows())));
      at += p.rows();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ValidationError("slice_cols: range out of bounds");
  }
  Var parents[] = {a};
  return tape_of(a).record(a.value().middleCols(start, count), parents,
                           [a, start, count](Tape& t, const Matrix& g) {
                             Matrix full = Matrix::Zero(a.rows(), a.cols());
                             full.middleCols(start, count) = g;
                             t.accumulate(a, full);
                           });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ValidationError("slice_rows: range out of bounds");
  }
  Var parents[] = {a};
  return tape_of(a).record(a.value().middleRows(start, count), parents,
                           [a, start, count](Tape& t, const Matrix& g) {
                             Matrix full = Matrix::Zero(a.rows(), a.cols());
                             full.middleRows(start, count) = g;
                             t.accumulate(a, full);
                           });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw ValidationError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<Eigen::Index> idx(index.begin(), index.end());
  Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents, [a, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, full);
  });
}

Var sparse_apply(std::shared_ptr<const SparseMatrix> s, const Var& a) {
  if (!s || s->cols() != a.rows()) throw ValidationError("sparse_apply: dimension mismatch");
  Var parents[] = {a};
  Matrix out = (*s) * a.value();
  return tape_of(a).record(std::move(out), parents, [s, a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix(s->transpose() * g));
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ValidationError("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix(Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols())));
  });
}

Var straight_through(const Matrix& hard, const Var& soft) {
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
    throw ValidationError("straight_through: shape mismatch");
  }
  Var parents[] = {soft};
  return tape_of(soft).record(hard, parents,
                              [soft](Tape& t, const Matrix& g) { t.accumulate(soft, g); });
}

}  // namespace mmcoop::numerics
