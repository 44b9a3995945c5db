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
#include <ostream>
#include <string>

#include "kfacsim/dist/cluster.hpp"
#include "kfacsim/errors.hpp"
#include "kfacsim/harness/experiment.hpp"
#include "kfacsim/kfac/oracle.hpp"
#include "kfacsim/util/rng.hpp"

namespace kfacsim::harness {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConsistencyError("selftest: " + what);
}

inline linalg::DenseMatrix random_gram(std::size_t n, util::Rng& rng) {
  linalg::DenseMatrix x(n + 2, n);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.data()[i] = rng.normal();
  }
  return linalg::pairwise_row_outer(x, x);
}

inline void selftest_preconditioner(std::ostream& out) {
  util::Rng rng(7101);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t na = 2 + static_cast<std::size_t>(trial) % 4;
    const std::size_t ng = 2 + static_cast<std::size_t>(trial + 1) % 4;
    kfac::KfacLayerState st;
    st.A = random_gram(na, rng);
    st.G = random_gram(ng, rng);
    st.have_factors = true;
    kfac::compute_eigen(st, 0.03);
    linalg::DenseMatrix grad(ng, na);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad.data()[i] = rng.normal();
    }
    const linalg::DenseMatrix fast = kfac::precondition(st, grad);
    const linalg::DenseMatrix slow =
        kfac::oracle_precondition(st.A, st.G, 0.03, grad);
    for (std::size_t i = 0; i < fast.size(); ++i) {
      require(std::abs(fast.data()[i] - slow.data()[i]) < 1e-8,
              "eigen-basis preconditioner disagrees with the dense inverse");
    }
  }
  out << "pass: preconditioner matches dense Kronecker inverse\n";
}

inline void selftest_world_transparency(std::ostream& out) {
  ExperimentConfig cfg;
  cfg.seed = 19;
  cfg.has_seed = true;
  cfg.dataset_size = 120;
  cfg.hidden = {8};
  cfg.optimizer = OptimizerKind::kfac;
  cfg.kfac.kfac_update_freq = 4;
  cfg.kfac.factor_update_freq = 2;
  cfg.batch_size = 40;
  cfg.iterations = 8;
  cfg.has_iterations = true;

  ExperimentConfig solo = cfg;
  solo.dist.world_size = 1;
  cfg.dist.world_size = 4;
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(solo);
  require(a.rows.size() == b.rows.size(), "world-size run lengths differ");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    require(a.rows[i].train_loss == b.rows[i].train_loss,
            "training loss depends on the simulated world size");
  }
  out << "pass: 4-worker run reproduces single-worker losses bit for bit\n";
}

inline void selftest_schedule(std::ostream& out) {
  const std::vector<double> costs = {5.0, 4.0, 3.0, 3.0, 3.0};
  const dist::LptResult r = dist::lpt_schedule(costs, 2);
  require(r.makespan == 10.0, "longest-processing-time example drifted");
  out << "pass: deterministic longest-processing-time schedule\n";
}

inline void selftest_triangular(std::ostream& out) {
  util::Rng rng(311);
  const linalg::DenseMatrix m = random_gram(5, rng);
  const std::vector<double> packed = dist::pack_triangular(m);
  require(packed.size() == dist::triangular_elements(5),
          "triangular packing has the wrong length");
  const linalg::DenseMatrix back = dist::unpack_triangular(packed, 5);
  for (std::size_t i = 0; i < m.size(); ++i) {
    require(m.data()[i] == back.data()[i],
            "triangular round trip altered a symmetric matrix");
  }
  out << "pass: triangular packing round-trips symmetric factors\n";
}

inline void selftest_config_roundtrip(std::ostream& out) {
  ExperimentConfig cfg;
  cfg.seed = 99;
  cfg.has_seed = true;
  cfg.optimizer = OptimizerKind::kfac;
  cfg.dist.grad_worker_frac = 0.25;
  cfg.kfac.damping = 0.012;
  const ExperimentConfig back = parse_config_text(serialize_config(cfg));
  require(serialize_config(back) == serialize_config(cfg),
          "config text does not round-trip");
  out << "pass: config serialization round-trips\n";
}

}  // namespace detail

// Quick invariant sweep for installs; throws ConsistencyError on failure.
inline void run_selftest(std::ostream& out) {
  detail::selftest_preconditioner(out);
  detail::selftest_world_transparency(out);
  detail::selftest_schedule(out);
  detail::selftest_triangular(out);
  detail::selftest_config_roundtrip(out);
  out << "selftest: all checks passed\n";
}

}  // namespace kfacsim::harness
