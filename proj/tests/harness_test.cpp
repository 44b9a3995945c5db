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

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "kfacsim/harness/cli.hpp"
#include "kfacsim/harness/config.hpp"
#include "kfacsim/harness/experiment.hpp"
#include "kfacsim/harness/metrics.hpp"

namespace kfacsim::harness {
namespace {

// ---------------------------------------------------------------------------
// Config parsing

TEST(ConfigTest, DdefaultsDescribeTheDeskWorkload) {
  ExperimentConfig cfg;
  EXPECT_EQ(cfg.dataset, net::DatasetKind::two_spirals);
  EXPECT_EQ(cfg.dist.world_size, 8u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{32, 32}));
  EXPECT_EQ(cfg.kfac.kfac_update_freq, 20u);
  EXPECT_EQ(cfg.kfac.factor_update_freq, 2u);
  EXPECT_DOUBLE_EQ(cfg.kfac.damping, 0.003);
  EXPECT_DOUBLE_EQ(cfg.kfac.running_avg_decay, 0.95);
  EXPECT_FALSE(cfg.has_seed);
}

TEST(ConfigTest, ParsesDottedKeysAndComments) {
  const std::string text =
      "# workload\n"
      "dataset.kind = tiny_images   # image grid\n"
      "seed = 7\n"
      "model.kind = conv\n"
      "optimizer = kfac\n"
      "lr = 0.05\n"
      "batch_size = 16\n"
      "iterations = 12\n"
      "\n"
      "kfac.damping = 0.01\n"
      "kfac.precision = half\n"
      "dist.world_size = 4\n"
      "dist.grad_worker_frac = 0.5\n"
      "dist.triangular_comm = true\n";
  const ExperimentConfig cfg = parse_config_text(text);
  EXPECT_EQ(cfg.dataset, net::DatasetKind::tiny_images);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_TRUE(cfg.has_seed);
  EXPECT_EQ(cfg.model, ModelKind::conv);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::kfac);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.05);
  EXPECT_EQ(cfg.batch_size, 16u);
  EXPECT_EQ(cfg.iterations, 12u);
  EXPECT_TRUE(cfg.has_iterations);
  EXPECT_DOUBLE_EQ(cfg.kfac.damping, 0.01);
  EXPECT_EQ(cfg.kfac.precision_mode, kfac::PrecisionMode::half);
  EXPECT_EQ(cfg.dist.world_size, 4u);
  EXPECT_DOUBLE_EQ(cfg.dist.grad_worker_frac, 0.5);
  EXPECT_TRUE(cfg.dist.triangular_comm);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigTest, UnknownKeyIsRejected) {
  EXPECT_THROW(parse_config_text("seed = 1\nlearning_rate = 0.1\n"),
               ConfigError);
}

TEST(ConfigTest, MalformedLineIsRejected) {
  EXPECT_THROW(parse_config_text("seed 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config_text("iterations = -3\n"), ConfigError);
}

TEST(ConfigTest, SeedIsMandatory) {
  ExperimentConfig cfg = parse_config_text("lr = 0.1\n");
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.seed = 1;
  cfg.has_seed = true;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigTest, IterationsAndEpochsAreExclusive) {
  EXPECT_THROW(
      parse_config_text("seed = 1\niterations = 10\nepochs = 2\n").validate(),
      ConfigError);
}

TEST(ConfigTest, EpochsResolveToCeilOfSteps) {
  ExperimentConfig cfg = parse_config_text("seed = 1\nepochs = 1.5\n");
  cfg.batch_size = 200;
  EXPECT_EQ(cfg.resolve_iterations(1000), 8u);  // ceil(1.5 * 1000 / 200)
  EXPECT_EQ(cfg.resolve_iterations(100), 1u);
}

TEST(ConfigTest, SerializationRoundTrips) {
  ExperimentConfig cfg;
  cfg.seed = 1234;
  cfg.has_seed = true;
  cfg.optimizer = OptimizerKind::kfac;
  cfg.lr = 0.07;
  cfg.hidden = {16, 8, 4};
  cfg.kfac.precision_mode = kfac::PrecisionMode::half;
  cfg.kfac.grad_scale_mode = kfac::GradScaleMode::none;
  cfg.dist.grad_worker_frac = 0.125;
  cfg.dist.triangular_comm = true;
  cfg.out = "runs/a";
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config_text(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.hidden, cfg.hidden);
  EXPECT_EQ(back.kfac.grad_scale_mode, kfac::GradScaleMode::none);
  EXPECT_EQ(back.out, "runs/a");
}

TEST(ConfigTest, BatchSmallerThanWorldIsRejected) {
  ExperimentConfig cfg;
  cfg.seed = 1;
  cfg.has_seed = true;
  cfg.batch_size = 4;
  cfg.dist.world_size = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Metrics log

TEST(MetricsTest, HeaderIsPinned) {
  EXPECT_STREQ(kMetricsHeader,
               "step,epoch,train_loss,valid_accuracy,sim_time,phase_forward,"
               "phase_backward,phase_grad_allreduce,phase_factor,phase_eigen,"
               "phase_precond,phase_bcast,kfac_bytes,peak_overhead_bytes");
}

TEST(MetricsTest, RowsRoundTripThroughCsv) {
  std::vector<MetricsRow> rows(2);
  rows[0].step = 0;
  rows[0].epoch = 0.2;
  rows[0].train_loss = 0.6931471805599453;
  rows[0].valid_accuracy = 0.5;
  rows[0].sim_time = 1.25e-3;
  rows[0].phase_forward = 1e-4;
  rows[0].kfac_bytes = 123456;
  rows[0].peak_overhead_bytes = 789;
  rows[1] = rows[0];
  rows[1].step = 1;
  rows[1].train_loss = 0.123456789012345678;  // rounds to nearest double
  const std::string csv = format_metrics_csv(rows);
  const std::vector<MetricsRow> back = parse_metrics_csv(csv);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].step, rows[i].step);
    EXPECT_EQ(back[i].epoch, rows[i].epoch);
    EXPECT_EQ(back[i].train_loss, rows[i].train_loss);
    EXPECT_EQ(back[i].valid_accuracy, rows[i].valid_accuracy);
    EXPECT_EQ(back[i].sim_time, rows[i].sim_time);
    EXPECT_EQ(back[i].phase_forward, rows[i].phase_forward);
    EXPECT_EQ(back[i].kfac_bytes, rows[i].kfac_bytes);
    EXPECT_EQ(back[i].peak_overhead_bytes, rows[i].peak_overhead_bytes);
  }
  EXPECT_EQ(format_metrics_csv(back), csv);
}

TEST(MetricsTest, BadHeaderIsRejected) {
  EXPECT_THROW(parse_metrics_csv("step,epoch\n0,1\n"), ConsistencyError);
  EXPECT_THROW(parse_metrics_csv(""), ConsistencyError);
}

TEST(MetricsTest, SummaryFindsFirstTargetCrossing) {
  std::vector<MetricsRow> rows(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].step = i;
    rows[i].sim_time = static_cast<double>(i + 1);
    rows[i].kfac_bytes = 10;
  }
  rows[1].valid_accuracy = 0.96;
  rows[2].valid_accuracy = 0.90;  // dips back below afterwards
  rows[3].valid_accuracy = 0.97;
  const Summary s = summarize(rows, 0.95);
  EXPECT_TRUE(s.reached_target);
  EXPECT_EQ(s.steps_to_target, 1u);
  EXPECT_DOUBLE_EQ(s.sim_time_to_target, 2.0);
  EXPECT_EQ(s.total_kfac_bytes, 40u);
  EXPECT_EQ(s.steps, 4u);
}

TEST(MetricsTest, SummaryReportsUnreachedTarget) {
  std::vector<MetricsRow> rows(2);
  rows[0].step = 0;
  rows[1].step = 1;
  rows[1].valid_accuracy = 0.5;
  const Summary s = summarize(rows, 0.95);
  EXPECT_FALSE(s.reached_target);
  const std::string text = format_summary(s);
  EXPECT_NE(text.find("steps_to_target = not_reached"), std::string::npos);
  EXPECT_NE(text.find("sim_time_to_target = not_reached"),
            std::string::npos);
}

// ---------------------------------------------------------------------------
// Experiment driver

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.has_seed = true;
  cfg.dataset = net::DatasetKind::two_spirals;
  cfg.dataset_size = 150;
  cfg.hidden = {8};
  cfg.optimizer = OptimizerKind::kfac;
  cfg.lr = 0.05;
  cfg.batch_size = 40;
  cfg.iterations = 10;
  cfg.has_iterations = true;
  cfg.kfac.kfac_update_freq = 4;
  cfg.kfac.factor_update_freq = 2;
  cfg.dist.world_size = 4;
  return cfg;
}

TEST(ExperimentTest, BatchScheduleWrapsAroundTheTrainingSet) {
  const net::Dataset ds = net::gen_dataset(net::DatasetKind::blobs, 20, 3);
  const std::size_t n = ds.train.size();
  ASSERT_EQ(n, 16u);
  const net::Batch b0 = batch_for_step(ds.train, 0, 6);
  const net::Batch b2 = batch_for_step(ds.train, 2, 6);  // starts at 12
  ASSERT_EQ(b0.size(), 6u);
  ASSERT_EQ(b2.size(), 6u);
  for (std::size_t c = 0; c < ds.train.inputs.cols(); ++c) {
    EXPECT_EQ(b0.inputs(0, c), ds.train.inputs(0, c));
    EXPECT_EQ(b2.inputs(0, c), ds.train.inputs(12, c));
    EXPECT_EQ(b2.inputs(3, c), ds.train.inputs(15, c));
    EXPECT_EQ(b2.inputs(4, c), ds.train.inputs(0, c));  // wrapped
  }
  EXPECT_EQ(b2.labels[4], ds.train.labels[0]);
  EXPECT_THROW(batch_for_step(ds.train, 0, n + 1), ConfigError);
}

TEST(ExperimentTest, RunsAreByteDeterministic) {
  const ExperimentConfig cfg = small_config();
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);
  EXPECT_EQ(format_metrics_csv(a.rows), format_metrics_csv(b.rows));
  EXPECT_EQ(format_summary(a.summary), format_summary(b.summary));
}

TEST(ExperimentTest, LossColumnIgnoresGradWorkerFraction) {
  ExperimentConfig cfg = small_config();
  cfg.dist.grad_worker_frac = 1.0;
  const ExperimentResult full = run_experiment(cfg);
  cfg.dist.grad_worker_frac = 0.25;
  const ExperimentResult quarter = run_experiment(cfg);
  ASSERT_EQ(full.rows.size(), quarter.rows.size());
  for (std::size_t i = 0; i < full.rows.size(); ++i) {
    EXPECT_EQ(full.rows[i].train_loss, quarter.rows[i].train_loss) << i;
    EXPECT_EQ(full.rows[i].valid_accuracy, quarter.rows[i].valid_accuracy);
  }
}

TEST(ExperimentTest, LossColumnIgnoresWorldSize) {
  ExperimentConfig cfg = small_config();
  const ExperimentResult wide = run_experiment(cfg);
  cfg.dist.world_size = 1;
  const ExperimentResult solo = run_experiment(cfg);
  ASSERT_EQ(wide.rows.size(), solo.rows.size());
  for (std::size_t i = 0; i < wide.rows.size(); ++i) {
    EXPECT_EQ(wide.rows[i].train_loss, solo.rows[i].train_loss) << i;
  }
}

TEST(ExperimentTest, SgdRunsCarryNoPreconditionerTraffic) {
  ExperimentConfig cfg = small_config();
  cfg.optimizer = OptimizerKind::sgd;
  const ExperimentResult res = run_experiment(cfg);
  for (const MetricsRow& r : res.rows) {
    EXPECT_EQ(r.kfac_bytes, 0u);
    EXPECT_EQ(r.phase_factor, 0.0);
    EXPECT_EQ(r.phase_eigen, 0.0);
    EXPECT_EQ(r.phase_bcast, 0.0);
  }
  EXPECT_EQ(res.summary.total_kfac_bytes, 0u);
}

TEST(ExperimentTest, PhaseColumnsSumToTheClock) {
  const ExperimentResult res = run_experiment(small_config());
  double acc = 0.0;
  for (const MetricsRow& r : res.rows) {
    acc += r.phase_forward + r.phase_backward + r.phase_grad_allreduce +
           r.phase_factor + r.phase_eigen + r.phase_precond + r.phase_bcast;
    EXPECT_DOUBLE_EQ(r.sim_time, acc);
    EXPECT_GT(r.phase_forward, 0.0);
  }
  EXPECT_DOUBLE_EQ(res.summary.total_sim_time, acc);
}

TEST(ExperimentTest, KfacTrafficAppearsOnlyOnScheduledSteps) {
  ExperimentConfig cfg = small_config();
  cfg.dist.grad_worker_frac = 1.0;  // no per-step grad broadcast
  const ExperimentResult res = run_experiment(cfg);
  for (const MetricsRow& r : res.rows) {
    if (r.step % cfg.kfac.factor_update_freq == 0) {
      EXPECT_GT(r.kfac_bytes, 0u) << r.step;
    } else {
      EXPECT_EQ(r.kfac_bytes, 0u) << r.step;
    }
  }
}

TEST(ExperimentTest, MatchesAHandRolledClusterLoop) {
  const ExperimentConfig cfg = small_config();
  const ExperimentResult res = run_experiment(cfg);

  const net::Dataset ds =
      net::gen_dataset(cfg.dataset, cfg.dataset_size, cfg.seed);
  kfac::KfacConfig kcfg = cfg.kfac;
  kcfg.lr = cfg.lr;
  dist::Cluster cluster(build_model(cfg, ds), resolved_dist_config(cfg),
                        kcfg, true,
                        dist::SgdOptions{cfg.lr, cfg.momentum,
                                         cfg.weight_decay});
  for (std::size_t s = 0; s < cfg.iterations; ++s) {
    const dist::StepStats stats =
        cluster.step(batch_for_step(ds.train, s, cfg.batch_size), s);
    EXPECT_EQ(res.rows[s].train_loss, stats.mean_loss) << s;
  }
  EXPECT_EQ(res.rows.back().valid_accuracy,
            net::accuracy(cluster.model(), ds.valid));
}

TEST(ExperimentTest, HalfPrecisionShrinksElementBytes) {
  ExperimentConfig cfg = small_config();
  EXPECT_EQ(resolved_dist_config(cfg).element_bytes, 8u);
  cfg.kfac.precision_mode = kfac::PrecisionMode::half;
  EXPECT_EQ(resolved_dist_config(cfg).element_bytes, 2u);
  cfg.optimizer = OptimizerKind::sgd;  // precision is a preconditioner knob
  EXPECT_EQ(resolved_dist_config(cfg).element_bytes, 8u);
}

TEST(ExperimentTest, SweepScalesEigenFootprintWithFraction) {
  ExperimentConfig cfg = small_config();
  cfg.iterations = 5;
  cfg.dist.world_size = 8;
  const std::vector<SweepRow> rows = sweep_frac(cfg, {0.125, 1.0});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].gradient_workers, 1u);
  EXPECT_EQ(rows[1].gradient_workers, 8u);
  EXPECT_GT(rows[0].per_worker_eigen_bytes, 0.0);
  EXPECT_DOUBLE_EQ(rows[1].per_worker_eigen_bytes,
                   8.0 * rows[0].per_worker_eigen_bytes);
  const std::string csv = format_sweep_csv(rows);
  EXPECT_NE(csv.find("frac,gradient_workers,mean_step_time"),
            std::string::npos);
}

TEST(ExperimentTest, CompareChecksThatWorkloadsMatch) {
  ExperimentConfig kfac_cfg = small_config();
  ExperimentConfig sgd_cfg = kfac_cfg;
  sgd_cfg.optimizer = OptimizerKind::sgd;
  sgd_cfg.seed = 6;
  EXPECT_THROW(compare_optimizers(sgd_cfg, kfac_cfg), ConfigError);
  sgd_cfg.seed = kfac_cfg.seed;
  sgd_cfg.batch_size = 20;
  EXPECT_THROW(compare_optimizers(sgd_cfg, kfac_cfg), ConfigError);
  sgd_cfg.batch_size = kfac_cfg.batch_size;
  EXPECT_THROW(compare_optimizers(kfac_cfg, kfac_cfg), ConfigError);
  const CompareResult res = compare_optimizers(sgd_cfg, kfac_cfg);
  EXPECT_EQ(res.sgd.rows.size(), res.kfac.rows.size());
  // Same start, different optimizers: the trajectories must split once the
  // preconditioner engages (step 0 computes its first eigenbasis).
  EXPECT_NE(res.sgd.rows[1].train_loss, res.kfac.rows[1].train_loss);
}

TEST(ExperimentTest, ConvModelTrainsOnImageData) {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.has_seed = true;
  cfg.dataset = net::DatasetKind::tiny_images;
  cfg.dataset_size = 60;
  cfg.model = ModelKind::conv;
  cfg.optimizer = OptimizerKind::kfac;
  cfg.lr = 0.05;
  cfg.batch_size = 12;
  cfg.iterations = 3;
  cfg.has_iterations = true;
  cfg.kfac.kfac_update_freq = 2;
  cfg.kfac.factor_update_freq = 2;
  cfg.dist.world_size = 2;
  const ExperimentResult res = run_experiment(cfg);
  ASSERT_EQ(res.rows.size(), 3u);
  for (const MetricsRow& r : res.rows) {
    EXPECT_TRUE(std::isfinite(r.train_loss));
  }
  // The same conv workload on a flat model kind must be rejected.
  cfg.model = ModelKind::mlp;
  EXPECT_NO_THROW(run_experiment(cfg));  // mlp on flattened pixels is fine
  cfg.model = ModelKind::conv;
  cfg.dataset = net::DatasetKind::two_spirals;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// Command line

int run_cli_args(std::vector<std::string> args, std::string* out_text = nullptr,
                 std::string* err_text = nullptr) {
  std::vector<const char*> argv;
  argv.push_back("kfacsim");
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream captured_out, captured_err;
  std::streambuf* old_out = std::cout.rdbuf(captured_out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(captured_err.rdbuf());
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (out_text) *out_text = captured_out.str();
  if (err_text) *err_text = captured_err.str();
  return rc;
}

std::string write_temp_config(const std::string& name,
                              const std::string& text) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream f(path);
  f << text;
  return path;
}

std::string tiny_train_config_text() {
  return "dataset.kind = two_spirals\n"
         "dataset.size = 150\n"
         "seed = 5\n"
         "model.hidden = 8\n"
         "optimizer = kfac\n"
         "lr = 0.05\n"
         "batch_size = 40\n"
         "iterations = 4\n"
         "kfac.kfac_update_freq = 4\n"
         "kfac.factor_update_freq = 2\n"
         "dist.world_size = 4\n";
}

TEST(CliTest, HelpExitsZero) {
  EXPECT_EQ(run_cli_args({"--help"}), 0);
  EXPECT_EQ(run_cli_args({"train", "--help"}), 0);
}

TEST(CliTest, UnknownFlagPrintsUsageAndExitsOne) {
  std::string err;
  EXPECT_EQ(run_cli_args({"train", "--frobnicate"}, nullptr, &err), 1);
  EXPECT_NE(err.find("Usage"), std::string::npos);
}

TEST(CliTest, MissingSubcommandExitsOne) {
  EXPECT_EQ(run_cli_args({}), 1);
}

TEST(CliTest, IndivisibleWorkerFractionExitsOne) {
  std::string err;
  const int rc = run_cli_args({"train", "--seed", "1", "--world-size", "8",
                               "--grad-worker-frac", "0.4"},
                              nullptr, &err);
  EXPECT_EQ(rc, 1);
  EXPECT_NE(err.find("grad_worker_frac"), std::string::npos);
}

TEST(CliTest, MissingSeedExitsOne) {
  std::string err;
  EXPECT_EQ(run_cli_args({"train", "--world-size", "1"}, nullptr, &err), 1);
  EXPECT_NE(err.find("seed"), std::string::npos);
}

TEST(CliTest, BadPrecisionValueExitsOne) {
  std::string err;
  EXPECT_EQ(run_cli_args({"train", "--seed", "1", "--precision", "fp97"},
                         nullptr, &err),
            1);
  EXPECT_NE(err.find("precision"), std::string::npos);
}

TEST(CliTest, TrainWritesLogAndSummary) {
  const std::string cfg_path =
      write_temp_config("harness_cli_train.cfg", tiny_train_config_text());
  const std::string stem = ::testing::TempDir() + "harness_cli_train_out";
  std::string out;
  const int rc = run_cli_args(
      {"train", "--config", cfg_path, "--out", stem + ".csv"}, &out);
  ASSERT_EQ(rc, 0);
  EXPECT_NE(out.find("final_train_loss = "), std::string::npos);

  std::ifstream csv(stem + ".csv");
  ASSERT_TRUE(csv.good());
  std::stringstream buf;
  buf << csv.rdbuf();
  const std::vector<MetricsRow> rows = parse_metrics_csv(buf.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].step, 3u);

  std::ifstream summary(stem + ".summary");
  ASSERT_TRUE(summary.good());
  std::stringstream sbuf;
  sbuf << summary.rdbuf();
  EXPECT_NE(sbuf.str().find("steps = 4"), std::string::npos);
}

TEST(CliTest, CommandLineOverridesBeatTheConfigFile) {
  const std::string cfg_path = write_temp_config(
      "harness_cli_override.cfg", tiny_train_config_text());
  std::string a_out, b_out;
  ASSERT_EQ(run_cli_args({"train", "--config", cfg_path}, &a_out), 0);
  ASSERT_EQ(run_cli_args({"train", "--config", cfg_path, "--seed", "77"},
                         &b_out),
            0);
  EXPECT_NE(a_out, b_out);  // different seed, different trajectory

  // World size must not change the result at all.
  std::string c_out;
  ASSERT_EQ(run_cli_args({"train", "--config", cfg_path, "--world-size", "1"},
                         &c_out),
            0);
  const auto strip_time = [](const std::string& s) {
    // keep only loss/accuracy lines, which are world-size invariant
    std::stringstream ss(s);
    std::string line, kept;
    while (std::getline(ss, line)) {
      if (line.find("loss") != std::string::npos ||
          line.find("accuracy") != std::string::npos) {
        kept += line + "\n";
      }
    }
    return kept;
  };
  EXPECT_EQ(strip_time(a_out), strip_time(c_out));
}

TEST(CliTest, SweepEmitsOneRowPerFraction) {
  const std::string cfg_path =
      write_temp_config("harness_cli_sweep.cfg", tiny_train_config_text());
  std::string out;
  const int rc = run_cli_args({"sweep", "--config", cfg_path, "--world-size",
                               "8", "--fracs", "0.25,1"},
                              &out);
  ASSERT_EQ(rc, 0);
  const std::size_t header = out.find("frac,gradient_workers");
  ASSERT_NE(header, std::string::npos);
  std::stringstream ss(out.substr(header));
  std::string line;
  std::getline(ss, line);  // header
  std::size_t data_lines = 0;
  while (std::getline(ss, line)) {
    if (!line.empty()) ++data_lines;
  }
  EXPECT_EQ(data_lines, 2u);
}

TEST(CliTest, CompareWritesBothLogs) {
  const std::string cfg_path =
      write_temp_config("harness_cli_compare.cfg", tiny_train_config_text());
  const std::string stem = ::testing::TempDir() + "harness_cli_compare_out";
  std::string out;
  const int rc = run_cli_args(
      {"compare", "--config", cfg_path, "--out", stem}, &out);
  ASSERT_EQ(rc, 0);
  EXPECT_NE(out.find("sgd_steps_to_target"), std::string::npos);
  EXPECT_NE(out.find("kfac_steps_to_target"), std::string::npos);
  EXPECT_TRUE(std::ifstream(stem + ".kfac.csv").good());
  EXPECT_TRUE(std::ifstream(stem + ".sgd.csv").good());
  EXPECT_TRUE(std::ifstream(stem + ".compare").good());
}

TEST(CliTest, SelftestPassesAndExitsZero) {
  std::string out;
  EXPECT_EQ(run_cli_args({"selftest"}, &out), 0);
  EXPECT_NE(out.find("selftest: all checks passed"), std::string::npos);
}

}  // namespace
}  // namespace kfacsim::harness
