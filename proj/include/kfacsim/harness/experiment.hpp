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
#include <string>
#include <vector>

#include "kfacsim/dist/cluster.hpp"
#include "kfacsim/errors.hpp"
#include "kfacsim/harness/config.hpp"
#include "kfacsim/harness/metrics.hpp"
#include "kfacsim/net/dataset.hpp"
#include "kfacsim/net/model.hpp"

namespace kfacsim::harness {

namespace detail {

inline net::Batch concat_batches(const net::Batch& a, const net::Batch& b) {
  if (a.inputs.cols() != b.inputs.cols()) {
    throw DimensionError("concat_batches: feature widths differ");
  }
  net::Batch out;
  out.inputs = linalg::DenseMatrix(a.size() + b.size(), a.inputs.cols());
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a.inputs.cols(); ++c) {
      out.inputs(r, c) = a.inputs(r, c);
    }
  }
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t c = 0; c < b.inputs.cols(); ++c) {
      out.inputs(a.size() + r, c) = b.inputs(r, c);
    }
  }
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

}  // namespace detail

// Deterministic batch schedule: contiguous slices of the training set in
// order, wrapping around at the end.  No reshuffling, so the whole run is a
// pure function of the config.
inline net::Batch batch_for_step(const net::Batch& train, std::size_t step,
                                 std::size_t batch_size) {
  const std::size_t n = train.size();
  if (batch_size > n) {
    throw ConfigError("batch_size: exceeds training set size " +
                      std::to_string(n));
  }
  const std::size_t start = (step * batch_size) % n;
  if (start + batch_size <= n) {
    return net::slice(train, start, start + batch_size);
  }
  return detail::concat_batches(
      net::slice(train, start, n),
      net::slice(train, 0, start + batch_size - n));
}

inline net::Model build_model(const ExperimentConfig& cfg,
                              const net::Dataset& ds) {
  if (cfg.model == ModelKind::conv) {
    if (ds.height * ds.width <= 1) {
      throw ConfigError("model.kind: conv requires an image dataset");
    }
    return net::make_conv_net(ds.channels, ds.height, ds.width, ds.classes,
                              cfg.seed);
  }
  return net::make_mlp(ds.train.inputs.cols(), cfg.hidden, ds.classes,
                       cfg.seed);
}

// The simulated element width follows the preconditioner precision; it is
// not an independent knob.
inline dist::DistConfig resolved_dist_config(const ExperimentConfig& cfg) {
  dist::DistConfig d = cfg.dist;
  d.element_bytes = (cfg.optimizer == OptimizerKind::kfac &&
                     cfg.kfac.precision_mode == kfac::PrecisionMode::half)
                        ? 2
                        : 8;
  return d;
}

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  Summary summary;
  dist::MemoryReport memory;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const net::Dataset ds = net::gen_dataset(cfg.dataset, cfg.dataset_size,
                                           cfg.seed);
  const net::Model model = build_model(cfg, ds);

  kfac::KfacConfig kcfg = cfg.kfac;
  kcfg.lr = cfg.lr;
  const dist::DistConfig dcfg = resolved_dist_config(cfg);
  const dist::SgdOptions opt{cfg.lr, cfg.momentum, cfg.weight_decay};
  dist::Cluster cluster(model, dcfg, kcfg,
                        cfg.optimizer == OptimizerKind::kfac, opt);

  const std::size_t steps = cfg.resolve_iterations(ds.train.size());
  const std::size_t train_n = ds.train.size();

  ExperimentResult result;
  result.rows.reserve(steps);
  double sim_time = 0.0;
  std::size_t ledger_mark = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const net::Batch batch = batch_for_step(ds.train, s, cfg.batch_size);
    const dist::StepStats stats = cluster.step(batch, s);

    MetricsRow row;
    row.step = s;
    row.epoch = static_cast<double>((s + 1) * cfg.batch_size) /
                static_cast<double>(train_n);
    row.train_loss = stats.mean_loss;
    row.valid_accuracy = net::accuracy(cluster.model(), ds.valid);

    // Fold in only the ledger entries this step appended.
    double kfac_bytes = 0.0;
    const auto& entries = cluster.ledger().entries();
    for (std::size_t i = ledger_mark; i < entries.size(); ++i) {
      const dist::LedgerEntry& e = entries[i];
      const double t = dist::entry_time(e, dcfg);
      switch (e.phase) {
        case dist::Phase::forward: row.phase_forward += t; break;
        case dist::Phase::backward: row.phase_backward += t; break;
        case dist::Phase::grad_allreduce:
          row.phase_grad_allreduce += t;
          break;
        case dist::Phase::factor_compute:
        case dist::Phase::factor_allreduce:
          row.phase_factor += t;
          break;
        case dist::Phase::eigen_compute: row.phase_eigen += t; break;
        case dist::Phase::precond_compute: row.phase_precond += t; break;
        case dist::Phase::eigen_bcast:
        case dist::Phase::precond_grad_bcast:
          row.phase_bcast += t;
          break;
      }
      if (e.phase == dist::Phase::factor_allreduce ||
          e.phase == dist::Phase::eigen_bcast ||
          e.phase == dist::Phase::precond_grad_bcast) {
        kfac_bytes += e.bytes;
      }
    }
    ledger_mark = entries.size();

    sim_time += row.phase_forward + row.phase_backward +
                row.phase_grad_allreduce + row.phase_factor +
                row.phase_eigen + row.phase_precond + row.phase_bcast;
    row.sim_time = sim_time;
    row.kfac_bytes = static_cast<std::uint64_t>(std::llround(kfac_bytes));
    row.peak_overhead_bytes = static_cast<std::uint64_t>(
        std::llround(cluster.memory_report().peak_total_bytes()));

    if (!std::isfinite(row.train_loss) || !std::isfinite(row.sim_time) ||
        !std::isfinite(row.valid_accuracy)) {
      throw ConsistencyError("run: non-finite metric at step " +
                             std::to_string(s));
    }
    result.rows.push_back(std::move(row));
  }
  result.summary = summarize(result.rows, cfg.target_metric);
  result.memory = cluster.memory_report();
  return result;
}

// ---------------------------------------------------------------------------
// Gradient-worker-fraction sweep

struct SweepRow {
  double frac = 0.0;
  std::size_t gradient_workers = 0;
  double mean_step_time = 0.0;
  double per_worker_eigen_bytes = 0.0;
  double per_worker_overhead_bytes = 0.0;
};

inline constexpr const char* kSweepHeader =
    "frac,gradient_workers,mean_step_time,per_worker_eigen_bytes,"
    "per_worker_overhead_bytes";

inline std::vector<SweepRow> sweep_frac(const ExperimentConfig& base,
                                        const std::vector<double>& fracs) {
  if (fracs.empty()) {
    throw ConfigError("sweep: need at least one fraction");
  }
  std::vector<SweepRow> out;
  for (double f : fracs) {
    ExperimentConfig cfg = base;
    cfg.dist.grad_worker_frac = f;
    const ExperimentResult res = run_experiment(cfg);

    SweepRow row;
    row.frac = f;
    row.gradient_workers = cfg.dist.gradient_worker_count();
    row.mean_step_time =
        res.summary.total_sim_time / static_cast<double>(res.summary.steps);
    row.per_worker_eigen_bytes = res.memory.mean_eigen_bytes();
    double total = 0.0;
    for (const dist::WorkerMemory& w : res.memory.workers) {
      total += w.total_bytes();
    }
    row.per_worker_overhead_bytes =
        total / static_cast<double>(res.memory.workers.size());
    out.push_back(row);
  }
  return out;
}

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = kSweepHeader;
  out += "\n";
  for (const SweepRow& r : rows) {
    std::ostringstream line;
    line << detail::csv_real(r.frac) << "," << r.gradient_workers << ","
         << detail::csv_real(r.mean_step_time) << ","
         << detail::csv_real(r.per_worker_eigen_bytes) << ","
         << detail::csv_real(r.per_worker_overhead_bytes);
    out += line.str();
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer comparison on an otherwise identical workload

struct CompareResult {
  ExperimentResult sgd;
  ExperimentResult kfac;
};

inline CompareResult compare_optimizers(const ExperimentConfig& sgd_cfg,
                                        const ExperimentConfig& kfac_cfg) {
  if (sgd_cfg.optimizer != OptimizerKind::sgd) {
    throw ConfigError("compare: first config must use optimizer = sgd");
  }
  if (kfac_cfg.optimizer != OptimizerKind::kfac) {
    throw ConfigError("compare: second config must use optimizer = kfac");
  }
  if (sgd_cfg.dataset != kfac_cfg.dataset ||
      sgd_cfg.dataset_size != kfac_cfg.dataset_size) {
    throw ConfigError("compare: dataset differs between configs");
  }
  if (sgd_cfg.model != kfac_cfg.model || sgd_cfg.hidden != kfac_cfg.hidden) {
    throw ConfigError("compare: model differs between configs");
  }
  if (sgd_cfg.seed != kfac_cfg.seed) {
    throw ConfigError("compare: seed differs between configs");
  }
  if (sgd_cfg.batch_size != kfac_cfg.batch_size) {
    throw ConfigError("compare: batch_size differs between configs");
  }
  CompareResult out;
  out.sgd = run_experiment(sgd_cfg);
  out.kfac = run_experiment(kfac_cfg);
  return out;
}

inline std::string format_compare_report(const CompareResult& r) {
  std::ostringstream out;
  const auto emit = [&out](const char* prefix, const Summary& s) {
    if (s.reached_target) {
      out << prefix << "_steps_to_target = " << s.steps_to_target << "\n";
      out << prefix << "_sim_time_to_target = "
          << detail::csv_real(s.sim_time_to_target) << "\n";
    } else {
      out << prefix << "_steps_to_target = not_reached\n";
      out << prefix << "_sim_time_to_target = not_reached\n";
    }
    out << prefix << "_final_valid_accuracy = "
        << detail::csv_real(s.final_valid_accuracy) << "\n";
  };
  emit("sgd", r.sgd.summary);
  emit("kfac", r.kfac.summary);
  if (r.sgd.summary.reached_target && r.kfac.summary.reached_target) {
    out << "step_ratio_sgd_over_kfac = "
        << detail::csv_real(
               static_cast<double>(r.sgd.summary.steps_to_target + 1) /
               static_cast<double>(r.kfac.summary.steps_to_target + 1))
        << "\n";
    out << "sim_time_ratio_sgd_over_kfac = "
        << detail::csv_real(r.sgd.summary.sim_time_to_target /
                            r.kfac.summary.sim_time_to_target)
        << "\n";
  }
  return out.str();
}

}  // namespace kfacsim::harness
