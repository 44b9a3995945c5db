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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kfacsim/dist/topology.hpp"
#include "kfacsim/errors.hpp"
#include "kfacsim/kfac/preconditioner.hpp"
#include "kfacsim/net/dataset.hpp"

namespace kfacsim::harness {

enum class OptimizerKind { sgd, kfac };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "kfac") return OptimizerKind::kfac;
  throw ConfigError("optimizer: unknown value '" + s + "'");
}

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "kfac";
}

enum class ModelKind { mlp, conv };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "conv") return ModelKind::conv;
  throw ConfigError("model.kind: unknown value '" + s + "'");
}

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::mlp ? "mlp" : "conv";
}

// Everything one experiment needs, expressed as flat `key = value` text with
// dotted keys for the nested pieces.  Defaults are the desk-scale workload:
// the two-spirals MLP on 8 simulated workers.
struct ExperimentConfig {
  net::DatasetKind dataset = net::DatasetKind::two_spirals;
  std::size_t dataset_size = 1000;

  std::uint64_t seed = 0;
  bool has_seed = false;  // seed is mandatory; no silent default

  ModelKind model = ModelKind::mlp;
  std::vector<std::size_t> hidden = {32, 32};

  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;

  kfac::KfacConfig kfac;
  dist::DistConfig dist = [] {
    dist::DistConfig d;
    d.world_size = 8;
    return d;
  }();

  std::size_t batch_size = 200;
  std::size_t iterations = 200;
  bool has_iterations = false;
  double epochs = 0.0;
  bool has_epochs = false;

  double target_metric = 0.95;  // validation accuracy threshold
  std::string out;              // output path stem; empty = stdout only

  void validate() const {
    if (!has_seed) {
      throw ConfigError("seed: required (set it in the config file or with "
                        "--seed)");
    }
    if (has_iterations && has_epochs) {
      throw ConfigError("iterations: set either iterations or epochs, not "
                        "both");
    }
    if (has_epochs && !(epochs > 0.0)) {
      throw ConfigError("epochs: must be > 0");
    }
    if (!has_epochs && iterations < 1) {
      throw ConfigError("iterations: must be >= 1");
    }
    if (batch_size < 1) {
      throw ConfigError("batch_size: must be >= 1");
    }
    if (batch_size < dist.world_size) {
      throw ConfigError("batch_size: must be >= dist.world_size");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
      throw ConfigError("lr: must be finite and > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ConfigError("momentum: must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
      throw ConfigError("weight_decay: must be finite and >= 0");
    }
    if (!std::isfinite(target_metric)) {
      throw ConfigError("target_metric: must be finite");
    }
    if (model == ModelKind::mlp) {
      for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("model.hidden: widths must be > 0");
      }
    }
    dist.validate();
    if (optimizer == OptimizerKind::kfac) {
      kfac::KfacConfig k = kfac;
      k.lr = lr;  // the base-optimizer rate rides in the shared lr field
      k.validate();
    }
  }

  // Steps to run once the training-set size is known.
  std::size_t resolve_iterations(std::size_t train_size) const {
    if (!has_epochs) return iterations;
    const double steps = std::ceil(
        epochs * static_cast<double>(train_size) /
        static_cast<double>(batch_size));
    return static_cast<std::size_t>(steps < 1.0 ? 1.0 : steps);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_count(const std::string& key,
                                 const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v +
                      "'");
  }
  return out;
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_width_list(const std::string& key,
                                                 const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<std::size_t>(parse_count(key, trim(item))));
  }
  return out;
}

inline void apply_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "dataset.kind") {
    cfg.dataset = net::parse_dataset_kind(value);
  } else if (key == "dataset.size") {
    cfg.dataset_size = static_cast<std::size_t>(parse_count(key, value));
  } else if (key == "seed") {
    cfg.seed = parse_count(key, value);
    cfg.has_seed = true;
  } else if (key == "model.kind") {
    cfg.model = parse_model_kind(value);
  } else if (key == "model.hidden") {
    cfg.hidden = parse_width_list(key, value);
  } else if (key == "optimizer") {
    cfg.optimizer = parse_optimizer(value);
  } else if (key == "lr") {
    cfg.lr = parse_real(key, value);
  } else if (key == "momentum") {
    cfg.momentum = parse_real(key, value);
  } else if (key == "weight_decay") {
    cfg.weight_decay = parse_real(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = static_cast<std::size_t>(parse_count(key, value));
  } else if (key == "iterations") {
    cfg.iterations = static_cast<std::size_t>(parse_count(key, value));
    cfg.has_iterations = true;
  } else if (key == "epochs") {
    cfg.epochs = parse_real(key, value);
    cfg.has_epochs = true;
  } else if (key == "target_metric") {
    cfg.target_metric = parse_real(key, value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "kfac.damping") {
    cfg.kfac.damping = parse_real(key, value);
  } else if (key == "kfac.factor_update_freq") {
    cfg.kfac.factor_update_freq =
        static_cast<std::size_t>(parse_count(key, value));
  } else if (key == "kfac.kfac_update_freq") {
    cfg.kfac.kfac_update_freq =
        static_cast<std::size_t>(parse_count(key, value));
  } else if (key == "kfac.running_avg_decay") {
    cfg.kfac.running_avg_decay = parse_real(key, value);
  } else if (key == "kfac.grad_scale_mode") {
    cfg.kfac.grad_scale_mode = kfac::parse_grad_scale_mode(value);
  } else if (key == "kfac.precision") {
    cfg.kfac.precision_mode = kfac::parse_precision_mode(value);
  } else if (key == "dist.world_size") {
    cfg.dist.world_size = static_cast<std::size_t>(parse_count(key, value));
  } else if (key == "dist.grad_worker_frac") {
    cfg.dist.grad_worker_frac = parse_real(key, value);
  } else if (key == "dist.latency_per_round") {
    cfg.dist.latency_per_round = parse_real(key, value);
  } else if (key == "dist.inv_bandwidth") {
    cfg.dist.inv_bandwidth = parse_real(key, value);
  } else if (key == "dist.compute_rate") {
    cfg.dist.compute_rate = parse_real(key, value);
  } else if (key == "dist.triangular_comm") {
    cfg.dist.triangular_comm = parse_flag(key, value);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

}  // namespace detail

// Flat `key = value` text, one setting per line, `#` starts a comment.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not of the form key = value");
    }
    detail::apply_key(cfg, detail::trim(line.substr(0, eq)),
                      detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open '" + path + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Canonical text form; parse_config_text(serialize_config(c)) reproduces c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "dataset.kind = " << net::dataset_kind_name(cfg.dataset) << "\n";
  out << "dataset.size = " << cfg.dataset_size << "\n";
  if (cfg.has_seed) out << "seed = " << cfg.seed << "\n";
  out << "model.kind = " << model_kind_name(cfg.model) << "\n";
  if (cfg.model == ModelKind::mlp) {
    out << "model.hidden = ";
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
      if (i) out << ",";
      out << cfg.hidden[i];
    }
    out << "\n";
  }
  out << "optimizer = " << optimizer_name(cfg.optimizer) << "\n";
  out << "lr = " << detail::format_real(cfg.lr) << "\n";
  out << "momentum = " << detail::format_real(cfg.momentum) << "\n";
  out << "weight_decay = " << detail::format_real(cfg.weight_decay) << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  if (cfg.has_epochs) {
    out << "epochs = " << detail::format_real(cfg.epochs) << "\n";
  } else {
    out << "iterations = " << cfg.iterations << "\n";
  }
  out << "target_metric = " << detail::format_real(cfg.target_metric)
      << "\n";
  if (!cfg.out.empty()) out << "out = " << cfg.out << "\n";
  out << "kfac.damping = " << detail::format_real(cfg.kfac.damping) << "\n";
  out << "kfac.factor_update_freq = " << cfg.kfac.factor_update_freq << "\n";
  out << "kfac.kfac_update_freq = " << cfg.kfac.kfac_update_freq << "\n";
  out << "kfac.running_avg_decay = "
      << detail::format_real(cfg.kfac.running_avg_decay) << "\n";
  out << "kfac.grad_scale_mode = "
      << (cfg.kfac.grad_scale_mode == kfac::GradScaleMode::none
              ? "none"
              : "norm_clip")
      << "\n";
  out << "kfac.precision = "
      << (cfg.kfac.precision_mode == kfac::PrecisionMode::half ? "half"
                                                               : "full")
      << "\n";
  out << "dist.world_size = " << cfg.dist.world_size << "\n";
  out << "dist.grad_worker_frac = "
      << detail::format_real(cfg.dist.grad_worker_frac) << "\n";
  out << "dist.latency_per_round = "
      << detail::format_real(cfg.dist.latency_per_round) << "\n";
  out << "dist.inv_bandwidth = "
      << detail::format_real(cfg.dist.inv_bandwidth) << "\n";
  out << "dist.compute_rate = " << detail::format_real(cfg.dist.compute_rate)
      << "\n";
  out << "dist.triangular_comm = "
      << (cfg.dist.triangular_comm ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace kfacsim::harness
