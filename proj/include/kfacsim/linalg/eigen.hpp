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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "kfacsim/errors.hpp"
#include "kfacsim/linalg/matrix.hpp"

namespace kfacsim::linalg {

// Full symmetric eigendecomposition: vectors has eigenvectors as columns,
// column j pairs with values[j].  Eigenvalues are sorted descending.
struct EigenPair {
  DenseMatrix vectors;
  std::vector<double> values;
};

namespace detail {

inline double off_diagonal_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) s += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(s);
}

}  // namespace detail

// Cyclic Jacobi eigensolver for symmetric matrices.
//
// A hand-rolled solver is used instead of a LAPACK binding because the whole
// simulation depends on this routine being bit-for-bit deterministic across
// runs and across simulated worker layouts: rotations are applied in a fixed
// (p, q) sweep order with no pivot-size heuristics, so the exact same float
// operations happen regardless of how the matrix was assembled.
//
// The input is symmetrized as (m + m^T)/2 before solving; callers are
// expected to pass matrices that are already symmetric to ~1e-8.
// Convergence: off-diagonal Frobenius norm below 1e-12 times the on-entry
// Frobenius norm, with a hard cap of 100 sweeps.
inline EigenPair sym_eig(const DenseMatrix& m) {
  require_square(m, "sym_eig");
  const std::size_t n = m.rows();

  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = 0.5 * (m(i, j) + m(j, i));
    }
  }
  DenseMatrix v = DenseMatrix::identity(n);

  const double entry_norm = frobenius_norm(a);
  const double tol = 1e-12 * entry_norm;

  for (int sweep = 0; sweep < 100 && n > 1; ++sweep) {
    if (detail::off_diagonal_norm(a) <= tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // For very large |theta| the textbook formula would square it and
        // overflow; the rotation angle is tiny there and t ~ 1/(2 theta).
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = a(p, p);
        const double aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(p, k) = a(k, p);
          a(k, q) = s * akp + c * akq;
          a(q, k) = a(k, q);
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort eigenvalues descending; equal values keep their pre-sort order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a(x, x) > a(y, y);
  });

  EigenPair out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.values[j] = a(src, src);
    // Fix the sign so each eigenvector is unique: the entry of largest
    // magnitude (lowest index on ties) is made positive.
    std::size_t lead = 0;
    double lead_mag = std::abs(v(0, src));
    for (std::size_t k = 1; k < n; ++k) {
      const double mag = std::abs(v(k, src));
      if (mag > lead_mag) {
        lead_mag = mag;
        lead = k;
      }
    }
    const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
  }
  return out;
}

}  // namespace kfacsim::linalg
