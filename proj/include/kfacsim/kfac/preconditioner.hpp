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

#include <cstddef>
#include <string>
#include <vector>

#include "kfacsim/errors.hpp"
#include "kfacsim/linalg/eigen.hpp"
#include "kfacsim/linalg/half.hpp"
#include "kfacsim/linalg/matrix.hpp"
#include "kfacsim/linalg/reduction.hpp"
#include "kfacsim/net/model.hpp"

namespace kfacsim::kfac {

enum class GradScaleMode { none, norm_clip };
enum class PrecisionMode { full, half };

inline GradScaleMode parse_grad_scale_mode(const std::string& s) {
  if (s == "none") return GradScaleMode::none;
  if (s == "norm_clip") return GradScaleMode::norm_clip;
  throw ConfigError("kfac.grad_scale_mode: unknown value '" + s + "'");
}

inline PrecisionMode parse_precision_mode(const std::string& s) {
  if (s == "full") return PrecisionMode::full;
  if (s == "half") return PrecisionMode::half;
  throw ConfigError("precision: unknown value '" + s + "'");
}

struct KfacConfig {
  double damping = 0.003;
  std::size_t factor_update_freq = 2;  // steps between factor refreshes
  std::size_t kfac_update_freq = 20;   // steps between eigen refreshes
  double running_avg_decay = 0.95;
  GradScaleMode grad_scale_mode = GradScaleMode::norm_clip;
  PrecisionMode precision_mode = PrecisionMode::full;
  double lr = 0.1;  // base optimizer learning rate

  void validate() const {
    if (!(damping > 0.0)) {
      throw ConfigError("kfac.damping: must be > 0");
    }
    if (factor_update_freq < 1) {
      throw ConfigError("kfac.factor_update_freq: must be >= 1");
    }
    if (kfac_update_freq < 1 || kfac_update_freq % factor_update_freq != 0) {
      throw ConfigError(
          "kfac.kfac_update_freq: must be a positive multiple of "
          "kfac.factor_update_freq");
    }
    if (!(running_avg_decay >= 0.0 && running_avg_decay < 1.0)) {
      throw ConfigError("kfac.running_avg_decay: must be in [0, 1)");
    }
    if (!(lr > 0.0)) {
      throw ConfigError("lr: must be > 0");
    }
  }

  bool factor_update_step(std::size_t step) const {
    return step % factor_update_freq == 0;
  }
  bool eigen_update_step(std::size_t step) const {
    return step % kfac_update_freq == 0;
  }
};

// Curvature state for one layer.  A tracks the input-side second moment
// (fan_in + bias square), G the output-gradient second moment (fan_out
// square).  Q_A/Q_G are their eigenvector bases and dGA holds the damped
// inverse of the eigenvalue outer product, element (o, i) =
// 1 / (gval_o * aval_i + damping); the raw eigenvalues themselves are never
// kept.  `pending_*` buffer statistics as weighted sums between factor
// refreshes so that micro-batches of any size average exactly once.
struct KfacLayerState {
  linalg::DenseMatrix A;
  linalg::DenseMatrix G;
  linalg::DenseMatrix Q_A;
  linalg::DenseMatrix Q_G;
  linalg::DenseMatrix dGA;
  bool have_factors = false;
  bool have_eigen = false;

  linalg::DenseMatrix pending_A;
  linalg::DenseMatrix pending_G;
  double pending_weight = 0.0;

  bool has_pending() const { return pending_weight > 0.0; }
};

// Second-moment factors of one capture, averaged over its rows:
// A = a^T a / rows, G = g^T g / rows.
inline std::pair<linalg::DenseMatrix, linalg::DenseMatrix> compute_factors(
    const net::LayerCapture& cap) {
  if (cap.a.empty() || cap.g.empty()) {
    throw StateError("compute_factors: capture has no recorded statistics");
  }
  if (cap.a.rows() != cap.g.rows()) {
    throw DimensionError("compute_factors: a and g row counts differ");
  }
  const double inv = 1.0 / static_cast<double>(cap.a.rows());
  return {linalg::scale(linalg::pairwise_row_outer(cap.a, cap.a), inv),
          linalg::scale(linalg::pairwise_row_outer(cap.g, cap.g), inv)};
}

// Unnormalized variant used by the simulated workers: raw row sums plus the
// row count, so that shards can be combined before the single division.
struct FactorSums {
  linalg::DenseMatrix a_sum;
  linalg::DenseMatrix g_sum;
  double weight = 0.0;
};

inline FactorSums compute_factor_sums(const net::LayerCapture& cap) {
  if (cap.a.empty() || cap.g.empty()) {
    throw StateError("compute_factor_sums: capture has no recorded statistics");
  }
  if (cap.a.rows() != cap.g.rows()) {
    throw DimensionError("compute_factor_sums: a and g row counts differ");
  }
  return {linalg::pairwise_row_outer(cap.a, cap.a),
          linalg::pairwise_row_outer(cap.g, cap.g),
          static_cast<double>(cap.a.rows())};
}

namespace detail {

inline void accumulate_weighted(KfacLayerState& state,
                                const linalg::DenseMatrix& a_contrib,
                                const linalg::DenseMatrix& g_contrib,
                                double weight) {
  if (state.have_factors) {
    linalg::require_same_shape(state.A, a_contrib, "accumulate_factors");
    linalg::require_same_shape(state.G, g_contrib, "accumulate_factors");
  }
  if (!state.has_pending()) {
    state.pending_A = a_contrib;
    state.pending_G = g_contrib;
  } else {
    linalg::add_inplace(state.pending_A, a_contrib);
    linalg::add_inplace(state.pending_G, g_contrib);
  }
  state.pending_weight += weight;
}

}  // namespace detail

// Buffer one micro-batch of normalized factors (unit weight).
inline void accumulate_factors(KfacLayerState& state,
                               const linalg::DenseMatrix& a_batch,
                               const linalg::DenseMatrix& g_batch) {
  detail::accumulate_weighted(state, a_batch, g_batch, 1.0);
}

// Buffer raw row sums carrying their own weight.
inline void accumulate_factor_sums(KfacLayerState& state,
                                   const FactorSums& sums) {
  detail::accumulate_weighted(state, sums.a_sum, sums.g_sum, sums.weight);
}

// Fold the pending statistics into the running factors: adopt them outright
// on the first update, otherwise exponential moving average with `decay`.
inline void update_running_factors(KfacLayerState& state, double decay) {
  if (!state.has_pending()) {
    throw StateError("update_running_factors: nothing accumulated");
  }
  const double inv = 1.0 / state.pending_weight;
  linalg::DenseMatrix mean_a = linalg::scale(state.pending_A, inv);
  linalg::DenseMatrix mean_g = linalg::scale(state.pending_G, inv);
  if (!state.have_factors) {
    state.A = std::move(mean_a);
    state.G = std::move(mean_g);
    state.have_factors = true;
  } else {
    for (std::size_t i = 0; i < state.A.size(); ++i) {
      state.A.data()[i] =
          decay * state.A.data()[i] + (1.0 - decay) * mean_a.data()[i];
    }
    for (std::size_t i = 0; i < state.G.size(); ++i) {
      state.G.data()[i] =
          decay * state.G.data()[i] + (1.0 - decay) * mean_g.data()[i];
    }
  }
  state.pending_A = linalg::DenseMatrix();
  state.pending_G = linalg::DenseMatrix();
  state.pending_weight = 0.0;
}

// Refresh the eigen state from the running factors.  Negative eigenvalues
// (possible only through round-off; the factors are Gram matrices) clamp to
// zero, so damping alone controls the smallest inverse scale.
inline void compute_eigen(KfacLayerState& state, double damping) {
  if (!(damping > 0.0)) {
    throw ConfigError("kfac.damping: must be > 0");
  }
  if (!state.have_factors) {
    throw StateError("compute_eigen: no running factors yet");
  }
  linalg::EigenPair ea = linalg::sym_eig(state.A);
  linalg::EigenPair eg = linalg::sym_eig(state.G);
  for (double& v : ea.values) v = v < 0.0 ? 0.0 : v;
  for (double& v : eg.values) v = v < 0.0 ? 0.0 : v;

  state.Q_A = std::move(ea.vectors);
  state.Q_G = std::move(eg.vectors);
  state.dGA = linalg::DenseMatrix(state.G.rows(), state.A.rows());
  for (std::size_t o = 0; o < state.G.rows(); ++o) {
    for (std::size_t i = 0; i < state.A.rows(); ++i) {
      state.dGA(o, i) = 1.0 / (eg.values[o] * ea.values[i] + damping);
    }
  }
  state.have_eigen = true;
}

// Apply the damped inverse curvature in the eigen basis:
//   Q_G * ((Q_G^T grad Q_A) .* dGA) * Q_A^T.
inline linalg::DenseMatrix precondition(const KfacLayerState& state,
                                        const linalg::DenseMatrix& grad) {
  if (!state.have_eigen) {
    throw StateError("precondition: eigen state has not been computed");
  }
  linalg::require_same_shape(grad, state.dGA, "precondition");
  linalg::DenseMatrix v1 =
      linalg::matmul(linalg::matmul_tn(state.Q_G, grad), state.Q_A);
  linalg::DenseMatrix v2 = linalg::hadamard(v1, state.dGA);
  return linalg::matmul_nt(linalg::matmul(state.Q_G, v2), state.Q_A);
}

// Rescale the preconditioned gradient against the raw one.  norm_clip keeps
// the preconditioned direction but never lets its norm exceed the raw
// gradient's norm.
inline linalg::DenseMatrix scale_gradient(const linalg::DenseMatrix& precond,
                                          const linalg::DenseMatrix& raw,
                                          GradScaleMode mode) {
  if (mode == GradScaleMode::none) return precond;
  linalg::require_same_shape(precond, raw, "scale_gradient");
  const double pn = linalg::frobenius_norm(precond);
  if (pn == 0.0) return precond;
  const double nu = std::min(1.0, linalg::frobenius_norm(raw) / pn);
  return linalg::scale(precond, nu);
}

// Single-process curvature pipeline: buffers capture statistics, refreshes
// factors and eigen state on their configured intervals, and preconditions
// gradients every step.  The distributed engine reuses the same stage
// functions, which is what keeps its results bit-identical to this one.
class Preconditioner {
 public:
  explicit Preconditioner(const KfacConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }

  void attach(const net::Model& model) {
    states_.assign(model.layers.size(), KfacLayerState{});
  }

  // Feed statistics captured during a factor-update step's backward pass.
  // May be called several times per step for micro-batch accumulation.
  void observe(const std::vector<net::LayerCapture>& captures) {
    if (captures.size() != states_.size()) {
      throw DimensionError("observe: capture count != layer count");
    }
    for (std::size_t li = 0; li < states_.size(); ++li) {
      accumulate_factor_sums(states_[li], compute_factor_sums(captures[li]));
    }
  }

  // Staged update for `step_index`: (1) fold pending factors on factor
  // steps, (2) refresh eigen state on eigen steps, (3) precondition,
  // (4) rescale against the raw gradient.
  std::vector<linalg::DenseMatrix> step(
      std::size_t step_index,
      const std::vector<linalg::DenseMatrix>& mean_grads) {
    if (mean_grads.size() != states_.size()) {
      throw DimensionError("step: gradient count != layer count");
    }
    if (cfg_.factor_update_step(step_index)) {
      for (KfacLayerState& s : states_) {
        update_running_factors(s, cfg_.running_avg_decay);
        if (cfg_.precision_mode == PrecisionMode::half) {
          linalg::quantize_half_inplace(s.A);
          linalg::quantize_half_inplace(s.G);
        }
      }
    }
    if (cfg_.eigen_update_step(step_index)) {
      for (KfacLayerState& s : states_) {
        compute_eigen(s, cfg_.damping);
        if (cfg_.precision_mode == PrecisionMode::half) {
          linalg::quantize_half_inplace(s.Q_A);
          linalg::quantize_half_inplace(s.Q_G);
          linalg::quantize_half_inplace(s.dGA);
        }
      }
    }
    std::vector<linalg::DenseMatrix> out;
    out.reserve(states_.size());
    for (std::size_t li = 0; li < states_.size(); ++li) {
      linalg::DenseMatrix pg = precondition(states_[li], mean_grads[li]);
      out.push_back(scale_gradient(pg, mean_grads[li], cfg_.grad_scale_mode));
    }
    return out;
  }

  std::vector<KfacLayerState>& states() { return states_; }
  const std::vector<KfacLayerState>& states() const { return states_; }
  const KfacConfig& config() const { return cfg_; }

 private:
  KfacConfig cfg_;
  std::vector<KfacLayerState> states_;
};

}  // namespace kfacsim::kfac
