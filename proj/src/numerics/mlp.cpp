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

#include "mmcoop/numerics/mlp.hpp"

#include <cmath>

#include "mmcoop/error.hpp"

namespace mmcoop::numerics {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ValidationError("unknown activation '" + s + "'");
}

Eigen::Index MlpParams::input_dim() const {
  if (layers.empty()) throw ValidationError("mlp: no layers");
  return layers.front().weight.rows();
}

Eigen::Index MlpParams::output_dim() const {
  if (layers.empty()) throw ValidationError("mlp: no layers");
  return layers.back().weight.cols();
}

void MlpParams::validate() const {
  if (layers.empty()) throw ValidationError("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ValidationError("mlp: layer " + std::to_string(i) + " bias shape mismatch");
    }
    if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
      throw ValidationError("mlp: layer " + std::to_string(i) + " input does not chain");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw NumericError("mlp: non-finite parameter in layer " + std::to_string(i));
    }
  }
}

MlpParams MlpParams::xavier(std::span<const Eigen::Index> dims, Activation hidden,
                            Activation output, Rng& rng, double gain) {
  if (dims.size() < 2) throw ValidationError("mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double a = gain * std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
    std::uniform_real_distribution<double> u(-a, a);
    Layer l;
    l.weight = Matrix(dims[i], dims[i + 1]);
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = u(rng);
    l.bias = Matrix::Zero(1, dims[i + 1]);
    l.activation = (i + 2 == dims.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
  }
  return p;
}

MlpParams MlpParams::zeros(std::span<const Eigen::Index> dims, Activation hidden,
                           Activation output) {
  if (dims.size() < 2) throw ValidationError("mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.layers.push_back(Layer{Matrix::Zero(dims[i], dims[i + 1]), Matrix::Zero(1, dims[i + 1]),
                             (i + 2 == dims.size()) ? output : hidden});
  }
  return p;
}

MlpParams MlpParams::identity(Eigen::Index in, Eigen::Index out) {
  MlpParams p;
  p.layers.push_back(Layer{Matrix::Identity(in, out), Matrix::Zero(1, out), Activation::Identity});
  return p;
}

namespace {

void activate_inplace(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Relu: m = m.cwiseMax(0.0); break;
    case Activation::Tanh: m = m.array().tanh(); break;
    case Activation::Sigmoid:
      m = m.unaryExpr([](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
      break;
  }
}

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

}  // namespace

Matrix mlp_apply(const MlpParams& p, const Matrix& x) {
  if (x.cols() != p.input_dim()) {
    throw ValidationError("mlp_apply: input has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(p.input_dim()));
  }
  Matrix h = x;
  for (const Layer& l : p.layers) {
    Matrix next = h * l.weight;
    next.rowwise() += l.bias.row(0);
    activate_inplace(next, l.activation);
    h = std::move(next);
  }
  return h;
}

Vector mlp_apply(const MlpParams& p, const Vector& x) {
  Matrix row = x.transpose();
  return mlp_apply(p, row).row(0).transpose();
}

Var mlp_apply(ParamBinder& bind, const MlpParams& p, const Var& x) {
  if (x.cols() != p.input_dim()) {
    throw ValidationError("mlp_apply: input has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(p.input_dim()));
  }
  Var h = x;
  for (const Layer& l : p.layers) {
    h = activate(add_row(matmul(h, bind(l.weight)), bind(l.bias)), l.activation);
  }
  return h;
}

}  // namespace mmcoop::numerics
