// Copyright 2026 The kfacsim Authors
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

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "kfacsim/errors.hpp"

namespace kfacsim::linalg {

// Row-major dense matrix of doubles.  All heavy numeric work in this project
// runs through the handful of kernels below so that accumulation order is
// identical no matter which code path produced the operands; that is what
// makes the simulated distributed runs bit-for-bit reproducible.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw DimensionError("DenseMatrix: rows and cols must both be >= 1");
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0 || rows.begin()->size() == 0) {
      throw DimensionError("DenseMatrix::from_rows: empty initializer");
    }
    DenseMatrix m(rows.size(), rows.begin()->size());
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols()) {
        throw DimensionError("DenseMatrix::from_rows: ragged rows");
      }
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool operator==(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

inline void require_square(const DenseMatrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": matrix must be square, got " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline void add_inplace(DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "sub");
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

inline DenseMatrix scale(const DenseMatrix& m, double s) {
  DenseMatrix out = m;
  for (double& v : out.data()) v *= s;
  return out;
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "hadamard");
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

// C = A * B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  DenseMatrix c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        c(i, j) += aik * b(k, j);
      }
    }
  }
  return c;
}

// C = A^T * B
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: row counts differ");
  }
  DenseMatrix c(a.cols(), b.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        c(i, j) += aki * b(k, j);
      }
    }
  }
  return c;
}

// C = A * B^T
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: column counts differ");
  }
  DenseMatrix c(a.rows(), b.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  }
  return c;
}

inline double frobenius_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const DenseMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s = std::max(s, std::abs(v));
  return s;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s = std::max(s, std::abs(a.data()[i] - b.data()[i]));
  }
  return s;
}

// ||actual - expected||_F / ||expected||_F, with a zero-reference guard.
inline double relative_error(const DenseMatrix& actual,
                             const DenseMatrix& expected) {
  require_same_shape(actual, expected, "relative_error");
  const double ref = frobenius_norm(expected);
  const double diff = frobenius_norm(sub(actual, expected));
  if (ref == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
  return diff / ref;
}

// Kronecker product: (mp x nq) blocks a(i,j) * b.
inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows() * b.rows(), a.cols() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t r = 0; r < b.rows(); ++r) {
        for (std::size_t c = 0; c < b.cols(); ++c) {
          out(i * b.rows() + r, j * b.cols() + c) = aij * b(r, c);
        }
      }
    }
  }
  return out;
}

inline DenseMatrix add_diag(const DenseMatrix& m, double gamma) {
  require_square(m, "add_diag");
  DenseMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, i) += gamma;
  return out;
}

// Column-major flattening: column j of m occupies v[j*rows .. j*rows+rows).
inline std::vector<double> vec_col_major(const DenseMatrix& m) {
  std::vector<double> v(m.size());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) v[c * m.rows() + r] = m(r, c);
  }
  return v;
}

inline DenseMatrix unvec_col_major(const std::vector<double>& v,
                                   std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) {
    throw DimensionError("unvec_col_major: length mismatch");
  }
  DenseMatrix m(rows, cols);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = v[c * rows + r];
  }
  return m;
}

// Gauss-Jordan inversion with partial pivoting.  This is deliberately the
// plain textbook routine: it is only used as an independent cross-check
// against the eigen-basis solve, so it must not share code with it.
inline DenseMatrix invert(const DenseMatrix& m) {
  require_square(m, "invert");
  const std::size_t n = m.rows();

  // Per-row magnitude of the input, used to scale the singularity test.
  std::vector<double> row_scale(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      row_scale[i] = std::max(row_scale[i], std::abs(m(i, j)));
    }
  }

  DenseMatrix a = m;
  DenseMatrix inv = DenseMatrix::identity(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot_row = col;
    double best = std::abs(a(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double cand = std::abs(a(r, col));
      if (cand > best) {
        best = cand;
        pivot_row = r;
      }
    }
    const double scale_ref = std::max(row_scale[perm[pivot_row]], 1e-300);
    if (best < 1e-14 * scale_ref) {
      throw SingularMatrixError("invert: pivot " + std::to_string(col) +
                                " is numerically zero");
    }
    if (pivot_row != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a(col, j), a(pivot_row, j));
        std::swap(inv(col, j), inv(pivot_row, j));
      }
      std::swap(perm[col], perm[pivot_row]);
    }
    const double pivot = a(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      a(col, j) /= pivot;
      inv(col, j) /= pivot;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

}  // namespace kfacsim::linalg
