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

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kfacsim/errors.hpp"
#include "kfacsim/harness/config.hpp"
#include "kfacsim/harness/experiment.hpp"
#include "kfacsim/harness/selftest.hpp"

namespace kfacsim::harness {

namespace detail {

// Values shared by every subcommand; presence is checked on the parsed
// subcommand, so unset fields never clobber the config file.
struct CliOverrides {
  std::string config_path;
  std::string out_path;
  std::string precision;
  std::uint64_t seed = 0;
  std::size_t world_size = 0;
  double grad_worker_frac = 0.0;
  std::size_t kfac_update_freq = 0;
  std::size_t factor_update_freq = 0;
  double damping = 0.0;
};

inline void add_common_options(CLI::App* sub, CliOverrides& ov) {
  sub->add_option("--config", ov.config_path,
                  "Experiment config file (key = value lines)");
  sub->add_option("--world-size", ov.world_size,
                  "Number of simulated workers");
  sub->add_option("--grad-worker-frac", ov.grad_worker_frac,
                  "Fraction of workers holding preconditioner state");
  sub->add_option("--kfac-update-freq", ov.kfac_update_freq,
                  "Steps between eigendecomposition refreshes");
  sub->add_option("--factor-update-freq", ov.factor_update_freq,
                  "Steps between factor accumulations");
  sub->add_option("--damping", ov.damping, "Curvature damping");
  sub->add_option("--precision", ov.precision,
                  "Preconditioner payload precision: full or half");
  sub->add_flag("--triangular-comm",
                "Ship symmetric factors as packed upper triangles");
  sub->add_option("--seed", ov.seed, "Run seed (required somewhere)");
  sub->add_option("--out", ov.out_path, "Output path stem");
}

inline ExperimentConfig resolve_config(const CLI::App* sub,
                                       const CliOverrides& ov) {
  ExperimentConfig cfg;
  if (sub->count("--config")) cfg = load_config(ov.config_path);
  if (sub->count("--seed")) {
    cfg.seed = ov.seed;
    cfg.has_seed = true;
  }
  if (sub->count("--world-size")) cfg.dist.world_size = ov.world_size;
  if (sub->count("--grad-worker-frac")) {
    cfg.dist.grad_worker_frac = ov.grad_worker_frac;
  }
  if (sub->count("--kfac-update-freq")) {
    cfg.kfac.kfac_update_freq = ov.kfac_update_freq;
  }
  if (sub->count("--factor-update-freq")) {
    cfg.kfac.factor_update_freq = ov.factor_update_freq;
  }
  if (sub->count("--damping")) cfg.kfac.damping = ov.damping;
  if (sub->count("--precision")) {
    cfg.kfac.precision_mode = kfac::parse_precision_mode(ov.precision);
  }
  if (sub->count("--triangular-comm")) cfg.dist.triangular_comm = true;
  if (sub->count("--out")) cfg.out = ov.out_path;
  return cfg;
}

inline std::string out_stem(const std::string& out) {
  if (out.size() > 4 && out.substr(out.size() - 4) == ".csv") {
    return out.substr(0, out.size() - 4);
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("out: cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw ConfigError("out: failed writing '" + path + "'");
}

inline std::vector<double> parse_frac_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_real("--fracs", trim(item)));
  }
  if (out.empty()) throw ConfigError("--fracs: empty list");
  return out;
}

}  // namespace detail

// Entry point behind main(); returns the process exit code.
// 0 = success, 1 = configuration error, 2 = internal invariant violation.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "Discrete-event simulator for adaptive second-order data-parallel "
      "training"};
  app.name("kfacsim");
  app.require_subcommand(1);

  detail::CliOverrides ov;
  CLI::App* train = app.add_subcommand(
      "train", "Run one training experiment and log per-step metrics");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Rerun the experiment across gradient-worker fractions");
  CLI::App* compare = app.add_subcommand(
      "compare", "Race the second-order optimizer against plain SGD");
  CLI::App* selftest = app.add_subcommand(
      "selftest", "Exercise the core numerical invariants");
  detail::add_common_options(train, ov);
  detail::add_common_options(sweep, ov);
  detail::add_common_options(compare, ov);
  detail::add_common_options(selftest, ov);

  std::string fracs_text = "0.125,0.25,0.5,1";
  sweep->add_option("--fracs", fracs_text,
                    "Comma-separated gradient-worker fractions");
  std::string sgd_config_path;
  compare->add_option("--sgd-config", sgd_config_path,
                      "Separate config for the SGD baseline (defaults to "
                      "the base config with optimizer = sgd)");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand(selftest)) {
      run_selftest(std::cout);
      return 0;
    }

    if (app.got_subcommand(train)) {
      const ExperimentConfig cfg = detail::resolve_config(train, ov);
      const ExperimentResult res = run_experiment(cfg);
      const std::string summary = format_summary(res.summary);
      if (!cfg.out.empty()) {
        const std::string stem = detail::out_stem(cfg.out);
        detail::write_file(stem + ".csv", format_metrics_csv(res.rows));
        detail::write_file(stem + ".summary", summary);
      }
      std::cout << summary;
      return 0;
    }

    if (app.got_subcommand(sweep)) {
      const ExperimentConfig cfg = detail::resolve_config(sweep, ov);
      const std::vector<double> fracs = detail::parse_frac_list(fracs_text);
      const std::vector<SweepRow> rows = sweep_frac(cfg, fracs);
      const std::string csv = format_sweep_csv(rows);
      if (!cfg.out.empty()) {
        detail::write_file(detail::out_stem(cfg.out) + ".csv", csv);
      }
      std::cout << csv;
      return 0;
    }

    // compare: the base config runs with the second-order optimizer, the
    // baseline (own config or a derived copy) runs plain SGD.
    ExperimentConfig kfac_cfg = detail::resolve_config(compare, ov);
    kfac_cfg.optimizer = OptimizerKind::kfac;
    ExperimentConfig sgd_cfg = compare->count("--sgd-config")
                                   ? load_config(sgd_config_path)
                                   : kfac_cfg;
    sgd_cfg.optimizer = OptimizerKind::sgd;
    const CompareResult res = compare_optimizers(sgd_cfg, kfac_cfg);
    const std::string report = format_compare_report(res);
    if (!kfac_cfg.out.empty()) {
      const std::string stem = detail::out_stem(kfac_cfg.out);
      detail::write_file(stem + ".kfac.csv",
                         format_metrics_csv(res.kfac.rows));
      detail::write_file(stem + ".sgd.csv", format_metrics_csv(res.sgd.rows));
      detail::write_file(stem + ".compare", report);
    }
    std::cout << report;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace kfacsim::harness
