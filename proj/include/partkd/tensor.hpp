// Copyright 2026 The partkd Authors
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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "partkd/common.hpp"

namespace partkd {

// Dense row-major double tensor. Feature maps use (C, T, V) order so that
// flattening the leading axes yields a (C*T) x V matrix view.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape) { resize(std::move(shape)); }
  Tensor(std::initializer_list<std::int64_t> shape)
      : Tensor(std::vector<std::int64_t>(shape)) {}

  void resize(std::vector<std::int64_t> shape) {
    shape_ = std::move(shape);
    std::int64_t n = 1;
    for (auto d : shape_) n *= d;
    data_.assign(static_cast<std::size_t>(n), 0.0);
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at2(std::int64_t i, std::int64_t j) { return data_[idx2(i, j)]; }
  double at2(std::int64_t i, std::int64_t j) const { return data_[idx2(i, j)]; }
  double& at3(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[idx3(i, j, k)]; }
  double at3(std::int64_t i, std::int64_t j, std::int64_t k) const { return data_[idx3(i, j, k)]; }
  double& at4(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
    return data_[idx4(i, j, k, l)];
  }
  double at4(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return data_[idx4(i, j, k, l)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void add_scaled(const Tensor& o, double s) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

 private:
  std::size_t idx2(std::int64_t i, std::int64_t j) const {
    return static_cast<std::size_t>(i * shape_[1] + j);
  }
  std::size_t idx3(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k);
  }
  std::size_t idx4(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l);
  }

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

// View a tensor as a (rows x cols) row-major matrix. rows*cols must equal size.
inline MapRM as_matrix(Tensor& t, std::int64_t rows, std::int64_t cols) {
  return MapRM(t.data(), rows, cols);
}
inline ConstMapRM as_matrix(const Tensor& t, std::int64_t rows, std::int64_t cols) {
  return ConstMapRM(t.data(), rows, cols);
}

}  // namespace partkd
