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

#include <span>
#include <string>
#include <vector>

#include "mmcoop/numerics/autodiff.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop::numerics {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One affine layer: y = act(x W + b) with x as a row vector.
struct Layer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation activation = Activation::Identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;

  // Throws ValidationError unless layer dimensions chain and all values are finite.
  void validate() const;

  /// Xavier-uniform weights, zero biases. `dims` lists input, hidden..., output.
  static MlpParams xavier(std::span<const Eigen::Index> dims, Activation hidden, Activation output,
                          Rng& rng, double gain = 1.0);
  static MlpParams zeros(std::span<const Eigen::Index> dims, Activation hidden, Activation output);
  /// Single identity-activation layer with weight = [I | 0] (or its
  /// truncation) and zero bias.
  static MlpParams identity(Eigen::Index in, Eigen::Index out);
};

/// Batched forward pass; each row of `x` is one sample.
Matrix mlp_apply(const MlpParams& p, const Matrix& x);
Vector mlp_apply(const MlpParams& p, const Vector& x);

/// Recorded forward pass over rows of `x`, parameters bound through `bind`.
Var mlp_apply(ParamBinder& bind, const MlpParams& p, const Var& x);

}  // namespace mmcoop::numerics
