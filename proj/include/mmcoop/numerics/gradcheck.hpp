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

#include <functional>
#include <span>
#include <vector>

#include "mmcoop/numerics/autodiff.hpp"

namespace mmcoop::numerics {

/// Builds a scalar on `tape` from leaves holding the current parameter values.
using ScalarGraph = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
  double max_error = 0.0;  // max |a - n| / max(1, |a|, |n|)
  std::size_t worst_param = 0;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x + eps e) - f(x - eps e)) / 2 eps for every entry of every parameter.
/// Throws NumericError when f is non-finite at a probe point.
GradCheckReport grad_check(const ScalarGraph& f, std::span<const Matrix> params, double eps);

}  // namespace mmcoop::numerics
