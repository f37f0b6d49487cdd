// Copyright 2026 The dsmt Authors
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

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "dsmt/common.hpp"

namespace dsmt {

/// Dense row-major matrix. The one value type used throughout the numerical
/// core; Eigen maps provide the BLAS-grade kernels underneath.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), data(std::size_t(r) * c, fill) {}

  T& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  T* row_ptr(int r) { return data.data() + std::size_t(r) * cols; }
  const T* row_ptr(int r) const { return data.data() + std::size_t(r) * cols; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  using EigenMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  EigenMap map() { return EigenMap(data.data(), rows, cols); }
  ConstEigenMap map() const { return ConstEigenMap(data.data(), rows, cols); }
};

template <typename T>
inline Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Mat<T> c(a.rows, b.cols);
  c.map().noalias() = a.map() * b.map();
  return c;
}

// c = a * b^T
template <typename T>
inline Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Mat<T> c(a.rows, b.rows);
  c.map().noalias() = a.map() * b.map().transpose();
  return c;
}

// c = a^T * b
template <typename T>
inline Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: inner dimensions differ");
  Mat<T> c(a.cols, b.cols);
  c.map().noalias() = a.map().transpose() * b.map();
  return c;
}

template <typename T>
inline void axpy(T alpha, const Mat<T>& x, Mat<T>* y) {
  if (!x.same_shape(*y)) throw ShapeError("axpy: shape mismatch");
  y->map() += alpha * x.map();
}

template <typename T>
inline T squared_l2(const Mat<T>& a) {
  return a.map().squaredNorm();
}

}  // namespace dsmt
