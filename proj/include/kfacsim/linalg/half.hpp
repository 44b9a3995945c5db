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

#include <cfenv>
#include <cmath>
#include <cstddef>

#include "kfacsim/linalg/matrix.hpp"

namespace kfacsim::linalg {

// Round a double to the nearest IEEE 754 binary16 value (ties to even) and
// return it widened back to double.  Values beyond the binary16 range
// saturate to +/-65504; NaN passes through.  Rounding goes double -> half in
// one step rather than via float, which would double-round.
inline double quantize_half_value(double x) {
  if (std::isnan(x)) return x;
  if (x == 0.0) return x;  // preserves signed zero
  const double mag = std::abs(x);
  if (mag > 65504.0) return std::copysign(65504.0, x);

  // binary16 has 10 fraction bits; normal quanta are 2^(e-10) for exponent
  // e >= -14, and subnormals share the fixed quantum 2^-24.
  int e = std::ilogb(mag);
  if (e < -14) e = -14;
  const double rounded =
      std::ldexp(std::nearbyint(std::ldexp(mag, 10 - e)), e - 10);
  // Rounding can carry into the next binade (e.g. 2047.9 -> 2048); that is
  // still exactly representable, but may exceed the max at the top binade.
  if (rounded > 65504.0) return std::copysign(65504.0, x);
  return std::copysign(rounded, x);
}

inline DenseMatrix quantize_half(const DenseMatrix& m) {
  DenseMatrix out = m;
  for (double& v : out.data()) v = quantize_half_value(v);
  return out;
}

inline void quantize_half_inplace(DenseMatrix& m) {
  for (double& v : m.data()) v = quantize_half_value(v);
}

}  // namespace kfacsim::linalg
