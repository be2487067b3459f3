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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmcoop/error.hpp"
#include "mmcoop/numerics/attention.hpp"
#include "mmcoop/numerics/gradcheck.hpp"
#include "mmcoop/numerics/mlp.hpp"
#include "support.hpp"

using namespace mmcoop;
using namespace mmcoop::numerics;
using mmcoop::testing::random_matrix;

namespace {

// Literal evaluation of softmax(q.k / sqrt(d)) v with explicit loops.
Vector attention_by_hand(const Vector& q, const Matrix& k, const Matrix& v) {
  const double d = static_cast<double>(q.size());
  std::vector<double> s(static_cast<std::size_t>(k.rows()));
  for (Eigen::Index j = 0; j < k.rows(); ++j) {
    double dot = 0;
    for (Eigen::Index c = 0; c < q.size(); ++c) dot += q(c) * k(j, c);
    s[static_cast<std::size_t>(j)] = dot / std::sqrt(d);
  }
  double z = 0;
  for (double x : s) z += std::exp(x);
  Vector out = Vector::Zero(v.cols());
  for (Eigen::Index j = 0; j < k.rows(); ++j) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(c) += std::exp(s[static_cast<std::size_t>(j)]) / z * v(j, c);
  }
  return out;
}

}  // namespace

TEST_CASE("tensor enforces shape and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), ValidationError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
  Tensor t = Tensor::zeros({2, 3, 4});
  const std::size_t idx[] = {1, 2, 3};
  t.at(idx) = 5.0;
  CHECK(t.data()[23] == 5.0);
  CHECK(t.size() == 24);
}

TEST_CASE("softmax") {
  SUBCASE("symmetric input") {
    Vector v = softmax(Eigen::Vector2d(0, 0));
    CHECK(v(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(v(1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("saturation") {
    Vector v = softmax(Eigen::Vector2d(1000, 0));
    CHECK(std::abs(v(0) - 1.0) <= 1e-12);
    CHECK(std::abs(v(1)) <= 1e-12);
  }
  SUBCASE("matches 40-digit reference") {
    // mpmath, 40 significant digits
    Vector v = softmax(Eigen::Vector3d(1, 2, 3));
    CHECK(std::abs(v(0) - 0.0900305731703804579980221) <= 1e-12);
    CHECK(std::abs(v(1) - 0.2447284710547976524729596) <= 1e-12);
    CHECK(std::abs(v(2) - 0.6652409557748218895290183) <= 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(softmax(Vector(0)), ValidationError);
    CHECK_THROWS_AS(softmax(Eigen::Vector2d(1, INFINITY)), NumericError);
  }
  SUBCASE("simplex and order preservation on random inputs") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      Vector x = random_matrix(rng, 6, 1, -50, 50).col(0);
      Vector p = softmax(x);
      CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
      CHECK(p.minCoeff() >= 0.0);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          if (x(i) < x(j)) CHECK(p(i) <= p(j));
    }
  }
}

TEST_CASE("cross_attention") {
  Rng rng(11);
  SUBCASE("single key returns its value row") {
    Matrix k = random_matrix(rng, 1, 4);
    Matrix v = random_matrix(rng, 1, 3);
    Vector q = random_matrix(rng, 4, 1).col(0);
    Vector out = cross_attention(q, k, v);
    CHECK((out - v.row(0).transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identical keys average the values") {
    Matrix k = random_matrix(rng, 1, 4).replicate(5, 1);
    Matrix v = random_matrix(rng, 5, 3);
    Vector out = cross_attention(random_matrix(rng, 4, 1).col(0), k, v);
    CHECK((out - v.colwise().mean().transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("random 3x4 instance matches the formula evaluated by hand") {
    for (int trial = 0; trial < 20; ++trial) {
      Matrix k = random_matrix(rng, 3, 4);
      Matrix v = random_matrix(rng, 3, 4);
      Vector q = random_matrix(rng, 4, 1).col(0);
      CHECK((cross_attention(q, k, v) - attention_by_hand(q, k, v)).cwiseAbs().maxCoeff() <= 1e-10);
      Tape tape;
      Var out = cross_attention(tape.constant(q.transpose()), tape.constant(k), tape.constant(v));
      CHECK((out.value().row(0).transpose() - attention_by_hand(q, k, v)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("permutation equivariance") {
    for (int trial = 0; trial < 50; ++trial) {
      Matrix k = random_matrix(rng, 6, 4);
      Matrix v = random_matrix(rng, 6, 2);
      Vector q = random_matrix(rng, 4, 1).col(0);
      std::vector<int> perm(6);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix kp(6, 4), vp(6, 2);
      for (int i = 0; i < 6; ++i) {
        kp.row(i) = k.row(perm[static_cast<std::size_t>(i)]);
        vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
      }
      CHECK((cross_attention(q, k, v) - cross_attention(q, kp, vp)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("no keys is an error") {
    CHECK_THROWS_AS(cross_attention(Vector::Zero(4), Matrix(0, 4), Matrix(0, 2)), ValidationError);
  }
}

TEST_CASE("mlp_apply") {
  Rng rng(3);
  SUBCASE("identity layer") {
    MlpParams p = MlpParams::identity(4, 4);
    Vector x = random_matrix(rng, 4, 1).col(0);
    CHECK(mlp_apply(p, x) == x);
  }
  SUBCASE("zero weights return the bias") {
    const Eigen::Index dims[] = {3, 2};
    MlpParams p = MlpParams::zeros(dims, Activation::Identity, Activation::Identity);
    p.layers[0].bias << 0.25, -1.5;
    Vector out = mlp_apply(p, Vector(Eigen::Vector3d(1, 2, 3)));
    CHECK(out(0) == 0.25);
    CHECK(out(1) == -1.5);
  }
  SUBCASE("random two-layer net matches explicit matrix arithmetic") {
    const Eigen::Index dims[] = {5, 7, 3};
    for (int trial = 0; trial < 10; ++trial) {
      MlpParams p = MlpParams::xavier(dims, Activation::Tanh, Activation::Identity, rng);
      p.layers[0].bias = random_matrix(rng, 1, 7);
      p.layers[1].bias = random_matrix(rng, 1, 3);
      Vector x = random_matrix(rng, 5, 1).col(0);
      Vector h(7);
      for (int j = 0; j < 7; ++j) {
        double s = p.layers[0].bias(0, j);
        for (int i = 0; i < 5; ++i) s += x(i) * p.layers[0].weight(i, j);
        h(j) = std::tanh(s);
      }
      Vector y(3);
      for (int j = 0; j < 3; ++j) {
        double s = p.layers[1].bias(0, j);
        for (int i = 0; i < 7; ++i) s += h(i) * p.layers[1].weight(i, j);
        y(j) = s;
      }
      CHECK((mlp_apply(p, x) - y).cwiseAbs().maxCoeff() <= 1e-10);
      Tape tape;
      ParamBinder bind(tape, false);
      Var out = mlp_apply(bind, p, tape.constant(x.transpose()));
      CHECK((out.value().row(0).transpose() - y).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("dimension mismatch") {
    MlpParams p = MlpParams::identity(4, 4);
    CHECK_THROWS_AS(mlp_apply(p, Vector(Vector::Zero(3))), ValidationError);
    p.layers.push_back(Layer{Matrix::Zero(3, 2), Matrix::Zero(1, 2), Activation::Identity});
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
}

TEST_CASE("backward") {
  SUBCASE("sum gives all-ones gradient") {
    Tape tape;
    Var x = tape.leaf(Matrix::Constant(2, 3, 0.7));
    tape.backward(sum(x));
    CHECK(x.grad() == Matrix::Ones(2, 3));
  }
  SUBCASE("x*x at 3 gives 6, and repeated calls accumulate until reset") {
    Tape tape;
    Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
    Var y = hadamard(x, x);
    tape.backward(y);
    CHECK(x.grad()(0, 0) == 6.0);
    tape.backward(y);
    CHECK(x.grad()(0, 0) == 12.0);
    tape.zero_grad();
    tape.backward(y);
    CHECK(x.grad()(0, 0) == 6.0);
  }
  SUBCASE("non-scalar root") {
    Tape tape;
    Var x = tape.leaf(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(x), ValidationError);
  }
  SUBCASE("non-finite results are rejected") {
    Tape tape;
    Var x = tape.leaf(Matrix::Constant(1, 1, 800.0));
    CHECK_THROWS_AS(numerics::exp(x), NumericError);
  }
  SUBCASE("constants receive no gradient") {
    Tape tape;
    Var c = tape.constant(Matrix::Ones(1, 2));
    Var x = tape.leaf(Matrix::Ones(1, 2));
    tape.backward(sum(hadamard(c, x)));
    CHECK(c.grad().size() == 0);
    CHECK(x.grad() == Matrix::Ones(1, 2));
  }
}

TEST_CASE("grad_check") {
  Rng rng(5);
  SUBCASE("quadratic") {
    ScalarGraph f = [](Tape&, std::span<const Var> p) { return sum(hadamard(p[0], p[0])); };
    Matrix x = random_matrix(rng, 3, 2);
    CHECK(grad_check(f, std::span(&x, 1), 1e-3).max_error <= 1e-6);
  }
  SUBCASE("linear") {
    Matrix w = random_matrix(rng, 4, 1);
    ScalarGraph f = [w](Tape& t, std::span<const Var> p) { return sum(matmul(p[0], t.constant(w))); };
    Matrix x = random_matrix(rng, 2, 4);
    CHECK(grad_check(f, std::span(&x, 1), 1e-3).max_error <= 1e-10);
  }
  SUBCASE("non-finite probe") {
    ScalarGraph f = [](Tape&, std::span<const Var> p) { return sum(numerics::exp(p[0])); };
    Matrix x = Matrix::Constant(1, 1, 709.5);
    CHECK_THROWS_AS(grad_check(f, std::span(&x, 1), 1.0), NumericError);
  }
  SUBCASE("composite attention and MLP loss") {
    const Eigen::Index dims[] = {4, 6, 4};
    MlpParams mlp = MlpParams::xavier(dims, Activation::Tanh, Activation::Identity, rng);
    std::vector<Matrix> params = {random_matrix(rng, 1, 4), random_matrix(rng, 5, 4),
                                  random_matrix(rng, 5, 3), mlp.layers[0].weight,
                                  mlp.layers[1].weight};
    ScalarGraph f = [&](Tape& t, std::span<const Var> p) {
      Var h = tanh(add_row(matmul(p[0], p[3]), t.constant(mlp.layers[0].bias)));
      Var q = matmul(h, p[4]);
      Var out = cross_attention(q, p[1], p[2]);
      return sum(hadamard(out, out));
    };
    CHECK(grad_check(f, params, 1e-3).max_error <= 1e-4);
  }
}

TEST_CASE("every differentiable primitive passes grad_check on 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_rng(seed, {101});
    std::vector<Matrix> p = {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2),
                             random_matrix(rng, 3, 1), random_matrix(rng, 1, 4, 0.2, 1.0)};
    ScalarGraph f = [](Tape& t, std::span<const Var> v) {
      Var a = matmul(v[0], v[1]);                       // 3x2
      Var b = softmax_rows(scale(a, 1.7));              // 3x2
      Var c = hadamard(sigmoid(a), b);                  // 3x2
      Var d = scale_rows(concat_cols(std::vector<Var>{c, tanh(a)}), v[2]);  // 3x4
      Var e = add_row(relu(d), v[3]);                   // 3x4
      Var g = smooth_l1(sub(e, transpose(transpose(e))), 1.0);
      Var h = log_floored(add_scalar(hadamard(v[3], v[3]), 0.5), 1e-6);
      Var r = reshape(slice_cols(e, 1, 2), 2, 3);
      std::vector<Eigen::Index> rows = {2, 0, 2};
      Var gr = gather_rows(concat_rows(std::vector<Var>{slice_rows(e, 0, 2), d}), rows);
      Var total = add(add(sum(g), sum(h)), add(sum(hadamard(r, r)), mean(hadamard(gr, gr))));
      std::vector<double> targets = {1.0, 0.0, 0.0};
      Var focal = focal_loss_sum(slice_cols(a, 0, 1), targets, 0.25, 2.0);
      return add(total, add(focal, sum(numerics::exp(scale(e, 0.3)))));
    };
    const auto report = grad_check(f, p, 1e-3);
    CHECK_MESSAGE(report.max_error <= 1e-4, "seed " << seed << " param " << report.worst_param);
  }
}

TEST_CASE("focal loss") {
  SUBCASE("gamma 0 reduces to alpha-weighted cross-entropy") {
    Tape tape;
    Matrix z(3, 1);
    z << 0.3, -1.2, 2.5;
    std::vector<double> t = {1, 0, 1};
    const double loss = focal_loss_sum(tape.constant(z), t, 0.25, 0.0).scalar();
    auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
    const double ce = -0.25 * std::log(sig(0.3)) - 0.75 * std::log(1 - sig(-1.2)) -
                      0.25 * std::log(sig(2.5));
    CHECK(loss == doctest::Approx(ce).epsilon(1e-12));
  }
  SUBCASE("non-negative and near zero for confident correct predictions") {
    Tape tape;
    Matrix z(2, 1);
    z << 30.0, -30.0;
    std::vector<double> t = {1, 0};
    const double loss = focal_loss_sum(tape.constant(z), t, 0.25, 2.0).scalar();
    CHECK(loss >= 0.0);
    CHECK(loss <= 1e-6);
  }
}

TEST_CASE("smooth_l1 piecewise values") {
  Tape tape;
  Matrix x(1, 4);
  x << 0.0, 1.0, -1.0, 3.0;
  Var y = smooth_l1(tape.constant(x), 1.0);
  CHECK(y.value()(0, 0) == 0.0);
  CHECK(y.value()(0, 1) == 0.5);
  CHECK(y.value()(0, 2) == 0.5);
  CHECK(y.value()(0, 3) == 2.5);
}

TEST_CASE("neighborhood_attention matches per-cell attention and its gradient") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5, m = 4, d = 3;
    NeighborLists nb;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < m; ++k)
        if (testing::uniform(rng, 0, 1) < 0.5) nb.index.push_back(k);
      nb.offsets.push_back(static_cast<Eigen::Index>(nb.index.size()));
    }
    std::vector<Matrix> p = {random_matrix(rng, n, d), random_matrix(rng, m, d),
                             random_matrix(rng, m, d), random_matrix(rng, n, d)};
    Tape tape;
    Var out = neighborhood_attention(tape.constant(p[0]), tape.constant(p[1]), tape.constant(p[2]),
                                     nb, tape.constant(p[3]));
    for (Eigen::Index i = 0; i < n; ++i) {
      auto ids = nb.of(i);
      if (ids.empty()) {
        CHECK(out.value().row(i) == p[3].row(i));
        continue;
      }
      Matrix k(static_cast<Eigen::Index>(ids.size()), d), v(static_cast<Eigen::Index>(ids.size()), d);
      for (std::size_t j = 0; j < ids.size(); ++j) {
        k.row(static_cast<Eigen::Index>(j)) = p[1].row(ids[j]);
        v.row(static_cast<Eigen::Index>(j)) = p[2].row(ids[j]);
      }
      Vector ref = attention_by_hand(p[0].row(i).transpose(), k, v);
      CHECK((out.value().row(i).transpose() - ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
    ScalarGraph f = [&nb](Tape&, std::span<const Var> v) {
      Var o = neighborhood_attention(v[0], v[1], v[2], nb, v[3]);
      return sum(hadamard(o, o));
    };
    CHECK(grad_check(f, p, 1e-3).max_error <= 1e-4);
  }
}

TEST_CASE("bilinear_sample") {
  // 2x3 grid with one channel: value = 10*row + col
  Matrix grid(6, 1);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) grid(r * 3 + c, 0) = 10 * r + c;
  Tape tape;
  Matrix base(3, 2);
  base << 0, 0, 0.5, 1.5, 1, 2;
  Matrix off(3, 2);
  off << 0, 0, 0, 0, 0, 1;  // last point reads at (1, 3): half outside
  Var out = bilinear_sample(tape.constant(grid), 2, 3, base, tape.constant(off));
  CHECK(out.value()(0, 0) == doctest::Approx(0.0));
  CHECK(out.value()(1, 0) == doctest::Approx(6.5));  // mean of 1, 2, 11, 12
  CHECK(out.value()(2, 0) == doctest::Approx(0.0));  // (1,3) is outside

  Matrix half_out(1, 2);
  half_out << 1.0, 2.5;
  Var edge = bilinear_sample(tape.constant(grid), 2, 3, half_out, tape.constant(Matrix::Zero(1, 2)));
  CHECK(edge.value()(0, 0) == doctest::Approx(6.0));  // 0.5 * 12 + 0.5 * 0

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix g = random_matrix(rng, 12, 2);
    Matrix b = random_matrix(rng, 4, 2, 0.1, 2.4);
    std::vector<Matrix> p = {g, random_matrix(rng, 4, 2, -0.45, 0.45)};
    ScalarGraph f = [b](Tape&, std::span<const Var> v) {
      Var o = bilinear_sample(v[0], 3, 4, b, v[1]);
      return sum(hadamard(o, o));
    };
    CHECK(grad_check(f, p, 1e-4).max_error <= 1e-4);
  }
}

TEST_CASE("group_weighted_sum and straight_through") {
  Rng rng(29);
  std::vector<Matrix> p = {random_matrix(rng, 2, 3), random_matrix(rng, 6, 4)};
  ScalarGraph f = [](Tape&, std::span<const Var> v) {
    Var o = group_weighted_sum(softmax_rows(v[0]), v[1]);
    return sum(hadamard(o, o));
  };
  CHECK(grad_check(f, p, 1e-3).max_error <= 1e-4);

  Tape tape;
  Var soft = tape.leaf(Matrix::Constant(1, 2, 0.3));
  Matrix hard(1, 2);
  hard << 1.0, 0.0;
  Var st = straight_through(hard, soft);
  CHECK(st.value() == hard);
  tape.backward(sum(scale(st, 2.0)));
  CHECK(soft.grad() == Matrix::Constant(1, 2, 2.0));
}

TEST_CASE("ops are bitwise deterministic") {
  Rng rng(31);
  Matrix a = random_matrix(rng, 8, 5), b = random_matrix(rng, 5, 6);
  auto run = [&] {
    Tape tape;
    Var x = tape.leaf(a), y = tape.leaf(b);
    Var out = softmax_rows(tanh(matmul(x, y)));
    tape.backward(sum(hadamard(out, out)));
    return std::pair{out.value(), x.grad()};
  };
  auto [o1, g1] = run();
  auto [o2, g2] = run();
  CHECK(o1 == o2);
  CHECK(g1 == g2);
}
