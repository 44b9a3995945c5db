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
#include <sstream>
#include <string>
#include <vector>

#include "kfacsim/errors.hpp"

namespace kfacsim::harness {

// One line of the training log.  Per-phase columns hold the simulated time
// spent in that phase on this step; sim_time is the running total.
struct MetricsRow {
  std::size_t step = 0;
  double epoch = 0.0;
  double train_loss = 0.0;
  double valid_accuracy = 0.0;
  double sim_time = 0.0;
  double phase_forward = 0.0;
  double phase_backward = 0.0;
  double phase_grad_allreduce = 0.0;
  double phase_factor = 0.0;
  double phase_eigen = 0.0;
  double phase_precond = 0.0;
  double phase_bcast = 0.0;
  std::uint64_t kfac_bytes = 0;
  std::uint64_t peak_overhead_bytes = 0;
};

inline constexpr const char* kMetricsHeader =
    "step,epoch,train_loss,valid_accuracy,sim_time,phase_forward,"
    "phase_backward,phase_grad_allreduce,phase_factor,phase_eigen,"
    "phase_precond,phase_bcast,kfac_bytes,peak_overhead_bytes";

namespace detail {

// Shortest round-trip decimal form, so logs are byte-stable across runs.
inline std::string csv_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double csv_parse_real(const std::string& field) {
  try {
    std::size_t used = 0;
    const double d = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return d;
  } catch (const std::exception&) {
    throw ConsistencyError("metrics: bad numeric field '" + field + "'");
  }
}

inline std::uint64_t csv_parse_count(const std::string& field) {
  std::uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), out);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ConsistencyError("metrics: bad integer field '" + field + "'");
  }
  return out;
}

}  // namespace detail

inline std::string format_metrics_row(const MetricsRow& r) {
  std::ostringstream out;
  out << r.step << "," << detail::csv_real(r.epoch) << ","
      << detail::csv_real(r.train_loss) << ","
      << detail::csv_real(r.valid_accuracy) << ","
      << detail::csv_real(r.sim_time) << ","
      << detail::csv_real(r.phase_forward) << ","
      << detail::csv_real(r.phase_backward) << ","
      << detail::csv_real(r.phase_grad_allreduce) << ","
      << detail::csv_real(r.phase_factor) << ","
      << detail::csv_real(r.phase_eigen) << ","
      << detail::csv_real(r.phase_precond) << ","
      << detail::csv_real(r.phase_bcast) << "," << r.kfac_bytes << ","
      << r.peak_overhead_bytes;
  return out.str();
}

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += "\n";
  for (const MetricsRow& r : rows) {
    out += format_metrics_row(r);
    out += "\n";
  }
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) {
    throw ConsistencyError("metrics: empty log");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw ConsistencyError("metrics: unexpected header '" + line + "'");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 14) {
      throw ConsistencyError("metrics: expected 14 fields, got " +
                             std::to_string(fields.size()));
    }
    MetricsRow r;
    r.step = static_cast<std::size_t>(detail::csv_parse_count(fields[0]));
    r.epoch = detail::csv_parse_real(fields[1]);
    r.train_loss = detail::csv_parse_real(fields[2]);
    r.valid_accuracy = detail::csv_parse_real(fields[3]);
    r.sim_time = detail::csv_parse_real(fields[4]);
    r.phase_forward = detail::csv_parse_real(fields[5]);
    r.phase_backward = detail::csv_parse_real(fields[6]);
    r.phase_grad_allreduce = detail::csv_parse_real(fields[7]);
    r.phase_factor = detail::csv_parse_real(fields[8]);
    r.phase_eigen = detail::csv_parse_real(fields[9]);
    r.phase_precond = detail::csv_parse_real(fields[10]);
    r.phase_bcast = detail::csv_parse_real(fields[11]);
    r.kfac_bytes = detail::csv_parse_count(fields[12]);
    r.peak_overhead_bytes = detail::csv_parse_count(fields[13]);
    rows.push_back(r);
  }
  return rows;
}

// End-of-run digest.  steps_to_target is the step index whose post-update
// validation accuracy first met the target, or unset when never reached.
struct Summary {
  bool reached_target = false;
  std::size_t steps_to_target = 0;
  double sim_time_to_target = 0.0;
  double final_train_loss = 0.0;
  double final_valid_accuracy = 0.0;
  double total_sim_time = 0.0;
  std::uint64_t total_kfac_bytes = 0;
  std::uint64_t peak_overhead_bytes = 0;
  std::size_t steps = 0;
};

inline std::string format_summary(const Summary& s) {
  std::ostringstream out;
  if (s.reached_target) {
    out << "steps_to_target = " << s.steps_to_target << "\n";
    out << "sim_time_to_target = " << detail::csv_real(s.sim_time_to_target)
        << "\n";
  } else {
    out << "steps_to_target = not_reached\n";
    out << "sim_time_to_target = not_reached\n";
  }
  out << "final_train_loss = " << detail::csv_real(s.final_train_loss)
      << "\n";
  out << "final_valid_accuracy = "
      << detail::csv_real(s.final_valid_accuracy) << "\n";
  out << "total_sim_time = " << detail::csv_real(s.total_sim_time) << "\n";
  out << "total_kfac_bytes = " << s.total_kfac_bytes << "\n";
  out << "peak_overhead_bytes = " << s.peak_overhead_bytes << "\n";
  out << "steps = " << s.steps << "\n";
  return out.str();
}

// Digest of the log plus the target threshold.
inline Summary summarize(const std::vector<MetricsRow>& rows,
                         double target_metric) {
  Summary s;
  s.steps = rows.size();
  for (const MetricsRow& r : rows) {
    if (!s.reached_target && r.valid_accuracy >= target_metric) {
      s.reached_target = true;
      s.steps_to_target = r.step;
      s.sim_time_to_target = r.sim_time;
    }
    s.total_kfac_bytes += r.kfac_bytes;
    if (r.peak_overhead_bytes > s.peak_overhead_bytes) {
      s.peak_overhead_bytes = r.peak_overhead_bytes;
    }
  }
  if (!rows.empty()) {
    s.final_train_loss = rows.back().train_loss;
    s.final_valid_accuracy = rows.back().valid_accuracy;
    s.total_sim_time = rows.back().sim_time;
  }
  return s;
}

}  // namespace kfacsim::harness
