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

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>

#include "mmcoop/numerics/tensor.hpp"

namespace mmcoop::numerics {

class Tape;

/// Handle to a matrix-valued node recorded on a Tape.
///
/// A Var is a (tape, index) pair and is cheap to copy. It stays valid for as
/// long as its tape is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Zero-sized until backward() reaches this node.
  const Matrix& grad() const;
  bool requires_grad() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording tape.
///
/// Nodes are appended in evaluation order, so the node index is a valid
/// topological order and backward() is a single reverse sweep. A tape is not
/// thread-safe; concurrent evaluations use separate tapes.
class Tape {
 public:
  // Receives the upstream gradient of the node being propagated.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Throws NumericError when `value` has a NaN or Inf.
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);

  /// Propagates d(root)/d(node) to every node that requires a gradient.
  /// Interior gradients are recomputed on every call; leaf gradients
  /// accumulate until zero_grad().
  void backward(const Var& root);
  void zero_grad();
  void clear();

  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient buffer of `v` when it requires one.
  void accumulate(const Var& v, const Matrix& g);
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    accumulate(v, Matrix(g));
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = true;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
};

/// Binds parameter matrices to leaves of a tape, one leaf per distinct matrix.
///
/// Forward code asks for `binder(params.weight)`; the trainer later reads the
/// gradient back through the same address.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  Var operator()(const Matrix& param);
  Tape& tape() const { return *tape_; }
  bool trainable() const { return trainable_; }

  // Gradient of a bound parameter; zero matrix when it never reached the loss.
  Matrix grad_of(const Matrix& param) const;
  bool is_bound(const Matrix& param) const { return bound_.contains(&param); }
  // Routes `param` to an existing Var, e.g. a leaf owned by a gradient check.
  void assign(const Matrix& param, const Var& v) { bound_[&param] = v; }

 private:
  Tape* tape_;
  bool trainable_;
  std::unordered_map<const Matrix*, Var> bound_;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// ---- elementwise and linear algebra -------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) scaled row-wise by col (n x 1).
Var scale_rows(const Var& a, const Var& col);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
// log(max(a, floor)); gradient is zero where a < floor.
Var log_floored(const Var& a, double floor);

// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

// Elementwise Huber/smooth-L1 with transition at |x| = beta.
Var smooth_l1(const Var& a, double beta = 1.0);

/// Sum over rows of the binary focal loss given logits z (n x 1) and binary
/// targets: -alpha_t (1 - p_t)^gamma log p_t with p = sigmoid(z).
Var focal_loss_sum(const Var& logits, std::span<const double> targets, double alpha,
                   double gamma);

// ---- shape manipulation --------------------------------------------------

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
// Rows of `a` picked by index; indices may repeat.
Var gather_rows(const Var& a, std::span<const Eigen::Index> index);
// Linear map S * a with a fixed sparse S (shared so repeated use is cheap).
Var sparse_apply(std::shared_ptr<const SparseMatrix> s, const Var& a);
// Row-major reinterpretation to rows x cols.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// Forward value `hard`, gradient routed to `soft` unchanged.
Var straight_through(const Matrix& hard, const Var& soft);

}  // namespace mmcoop::numerics
