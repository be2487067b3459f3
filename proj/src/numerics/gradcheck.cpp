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

#include "mmcoop/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mmcoop/error.hpp"

namespace mmcoop::numerics {

namespace {

double evaluate(const ScalarGraph& f, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.constant(p));
  const double v = f(tape, leaves).scalar();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarGraph& f, std::span<const Matrix> params, double eps) {
  if (!(eps > 0.0)) throw ValidationError("grad_check: eps must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& p : params) leaves.push_back(tape.leaf(p, true));
    Var root = f(tape, leaves);
    tape.backward(root);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      analytic.push_back(leaves[i].grad().size() ? leaves[i].grad()
                                                 : Matrix::Zero(params[i].rows(), params[i].cols()));
    }
  }

  GradCheckReport report;
  std::vector<Matrix> probe(params.begin(), params.end());
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (Eigen::Index k = 0; k < probe[p].size(); ++k) {
      const double saved = probe[p].data()[k];
      probe[p].data()[k] = saved + eps;
      const double up = evaluate(f, probe);
      probe[p].data()[k] = saved - eps;
      const double down = evaluate(f, probe);
      probe[p].data()[k] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data()[k];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > report.max_error) {
        report = GradCheckReport{err, p, k, a, numeric};
      }
    }
  }
  return report;
}

}  // namespace mmcoop::numerics
