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

#include "mmcoop/numerics/tensor.hpp"

#include <cmath>
#include <string>

#include "mmcoop/error.hpp"

namespace mmcoop::numerics {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ValidationError("tensor: shape product " + std::to_string(shape_product(shape_)) +
                          " does not match data length " + std::to_string(data_.size()));
  }
  if (!all_finite()) throw NumericError("tensor: non-finite value");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(data));
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ValidationError("tensor: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t d = 0; d < shape_.size(); ++d) {
    if (index[d] >= shape_[d]) throw ValidationError("tensor: index out of range");
    flat = flat * shape_[d] + index[d];
  }
  return flat;
}

double& Tensor::at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }
double Tensor::at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }

Matrix Tensor::to_matrix() const {
  if (rank() != 2) throw ValidationError("tensor: to_matrix requires rank 2");
  Matrix m(static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1]));
  std::copy(data_.begin(), data_.end(), m.data());
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace mmcoop::numerics
