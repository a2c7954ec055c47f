// Copyright 2026 The dpmesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "dpmesh/budget.hpp"
#include "dpmesh/error.hpp"

namespace dpmesh {

/// Dense row-major matrix of doubles. All library-level linear algebra is
/// built on this one type; sizes stay small enough that sparse formats are
/// not worth their complexity.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      require(row.size() == c, errc::shape_mismatch, "ragged initializer");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row_span(std::size_t i) {
    return std::span<double>(data_.data() + i * cols_, cols_);
  }
  std::span<const double> row_span(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix& operator+=(const Matrix& other) {
    require(same_shape(other), errc::shape_mismatch, "matrix addition shape");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }

  Matrix& operator-=(const Matrix& other) {
    require(same_shape(other), errc::shape_mismatch, "matrix subtraction shape");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
  }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

  double frobenius_norm() const {
    double sum = 0.0;
    for (double v : data_) sum += v * v;
    return std::sqrt(sum);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Matrix block(std::size_t row0, std::size_t col0, std::size_t nrows,
               std::size_t ncols) const {
    require(row0 + nrows <= rows_ && col0 + ncols <= cols_, errc::shape_mismatch,
            "block out of range");
    Matrix b(nrows, ncols);
    for (std::size_t i = 0; i < nrows; ++i)
      for (std::size_t j = 0; j < ncols; ++j) b(i, j) = (*this)(row0 + i, col0 + j);
    return b;
  }

  void set_block(std::size_t row0, std::size_t col0, const Matrix& b) {
    require(row0 + b.rows() <= rows_ && col0 + b.cols() <= cols_,
            errc::shape_mismatch, "set_block out of range");
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) (*this)(row0 + i, col0 + j) = b(i, j);
  }

  Matrix select_rows(const std::vector<std::size_t>& indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      require(indices[i] < rows_, errc::shape_mismatch, "row index out of range");
      for (std::size_t j = 0; j < cols_; ++j) out(i, j) = (*this)(indices[i], j);
    }
    return out;
  }

  Matrix select_cols(const std::vector<std::size_t>& indices) const {
    Matrix out(rows_, indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
      require(indices[j] < cols_, errc::shape_mismatch, "col index out of range");
      for (std::size_t i = 0; i < rows_; ++i) out(i, j) = (*this)(i, indices[j]);
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C = A * B, cache-friendly i-k-j loop order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), errc::shape_mismatch, "matmul inner dimension");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.data() + i * m;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

/// A^T * B without forming the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), errc::shape_mismatch, "matmul_tn inner dimension");
  Matrix c(a.cols(), b.cols());
  const std::size_t m = a.cols(), n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.data() + k * m;
    const double* brow = b.data() + k * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  require(top.cols() == bottom.cols(), errc::shape_mismatch, "vstack width");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.set_block(0, 0, top);
  out.set_block(top.rows(), 0, bottom);
  return out;
}

inline Matrix hstack(const Matrix& left, const Matrix& right) {
  if (left.cols() == 0) return right;
  if (right.cols() == 0) return left;
  require(left.rows() == right.rows(), errc::shape_mismatch, "hstack height");
  Matrix out(left.rows(), left.cols() + right.cols());
  out.set_block(0, 0, left);
  out.set_block(0, left.cols(), right);
  return out;
}

/// Kronecker product; guarded by the dense-materialization budget.
inline Matrix kron(const Matrix& x, const Matrix& y) {
  const std::uint64_t bytes = std::uint64_t{8} * x.rows() * y.rows() * x.cols() * y.cols();
  check_budget(bytes, "kron");
  Matrix out(x.rows() * y.rows(), x.cols() * y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double xij = x(i, j);
      if (xij == 0.0) continue;
      for (std::size_t p = 0; p < y.rows(); ++p)
        for (std::size_t q = 0; q < y.cols(); ++q)
          out(i * y.rows() + p, j * y.cols() + q) = xij * y(p, q);
    }
  return out;
}

/// Permutation P of size nT x nT mapping node-major stacking (node u, step t)
/// at index u*T + t to time-major stacking at index t*n + u. For any
/// X in R^{n x n} and Y in R^{T x T} it satisfies P (X kron Y) = (Y kron X) P,
/// and commutation(T, n) * commutation(n, T) = I.
inline Matrix commutation(std::size_t T, std::size_t n) {
  require(T >= 1 && n >= 1, errc::invalid_argument, "commutation needs T, n >= 1");
  Matrix p(n * T, n * T);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t t = 0; t < T; ++t) p(u + n * t, t + T * u) = 1.0;
  return p;
}

/// Square lower-triangular matrix; invertible iff all diagonal entries are
/// nonzero.
class LowerTriangular {
 public:
  LowerTriangular() = default;

  explicit LowerTriangular(std::size_t dim) : mat_(dim, dim) {}

  /// Adopts a square matrix, zeroing anything above the diagonal.
  static LowerTriangular from_matrix(const Matrix& m) {
    require(m.rows() == m.cols(), errc::shape_mismatch, "lower-triangular square");
    LowerTriangular l(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j <= i; ++j) l.mat_(i, j) = m(i, j);
    return l;
  }

  static LowerTriangular identity(std::size_t dim) {
    LowerTriangular l(dim);
    for (std::size_t i = 0; i < dim; ++i) l.mat_(i, i) = 1.0;
    return l;
  }

  /// All-ones lower triangle (the prefix-sum matrix).
  static LowerTriangular ones(std::size_t dim) {
    LowerTriangular l(dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j <= i; ++j) l.mat_(i, j) = 1.0;
    return l;
  }

  std::size_t dim() const { return mat_.rows(); }
  const Matrix& mat() const { return mat_; }

  double& at(std::size_t i, std::size_t j) { return mat_(i, j); }
  double operator()(std::size_t i, std::size_t j) const { return mat_(i, j); }

  bool invertible(double tol = 0.0) const {
    for (std::size_t i = 0; i < dim(); ++i)
      if (std::abs(mat_(i, i)) <= tol) return false;
    return true;
  }

  /// Inverse by forward substitution, column by column.
  LowerTriangular inverse() const {
    require(invertible(), errc::singular_matrix, "singular lower-triangular");
    const std::size_t n = dim();
    LowerTriangular inv(n);
    for (std::size_t j = 0; j < n; ++j) {
      inv.mat_(j, j) = 1.0 / mat_(j, j);
      for (std::size_t i = j + 1; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t k = j; k < i; ++k) sum += mat_(i, k) * inv.mat_(k, j);
        inv.mat_(i, j) = -sum / mat_(i, i);
      }
    }
    return inv;
  }

 private:
  Matrix mat_;
};

/// X = A * C^{-1} for lower-triangular C, via back substitution on each row.
inline Matrix right_divide_lower(const Matrix& a, const LowerTriangular& c) {
  require(a.cols() == c.dim(), errc::shape_mismatch, "right_divide_lower shape");
  require(c.invertible(), errc::singular_matrix, "right_divide_lower: singular C");
  const std::size_t n = c.dim();
  Matrix x(a.rows(), n);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t jj = n; jj-- > 0;) {
      double sum = a(i, jj);
      for (std::size_t k = jj + 1; k < n; ++k) sum -= x(i, k) * c(k, jj);
      x(i, jj) = sum / c(jj, jj);
    }
  }
  return x;
}

}  // namespace dpmesh
