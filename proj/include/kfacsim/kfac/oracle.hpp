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

#include "kfacsim/linalg/matrix.hpp"

namespace kfacsim::kfac {

// Reference preconditioner: materializes the full Kronecker-factored
// curvature block, damps it, inverts it by Gaussian elimination, and applies
// it to the column-major flattened gradient.
//
// This route shares no code with the production eigen-basis path (different
// factorization, different solver, different flattening) and is O(n^6), so
// it exists purely as a cross-check in tests.
inline linalg::DenseMatrix oracle_precondition(const linalg::DenseMatrix& a,
                                               const linalg::DenseMatrix& g,
                                               double damping,
                                               const linalg::DenseMatrix& grad) {
  linalg::require_square(a, "oracle_precondition");
  linalg::require_square(g, "oracle_precondition");
  if (grad.rows() != g.rows() || grad.cols() != a.rows()) {
    throw DimensionError(
        "oracle_precondition: grad must be (g dim) x (a dim)");
  }
  linalg::DenseMatrix damped = linalg::add_diag(linalg::kron(a, g), damping);
  linalg::DenseMatrix inv = linalg::invert(damped);
  const std::vector<double> v = linalg::vec_col_major(grad);
  std::vector<double> r(v.size(), 0.0);
  for (std::size_t i = 0; i < inv.rows(); ++i) {
    for (std::size_t j = 0; j < inv.cols(); ++j) r[i] += inv(i, j) * v[j];
  }
  return linalg::unvec_col_major(r, grad.rows(), grad.cols());
}

}  // namespace kfacsim::kfac
