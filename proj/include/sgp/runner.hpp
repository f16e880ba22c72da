// sgp/runner.hpp
//
// Experiment pipelines behind the CLI: rolling-window run, K-sweep
// benchmark, and the quick oracle self-check.  All pipelines are pure
// in-memory computations; file emission lives in the writer helpers so the
// CLI stays thin and tests can work on the structures directly.

#pragma once

#include <string>
#include <vector>

#include "sgp/config.hpp"

namespace sgp {

struct WindowResult {
  int index = 0;
  bool failed = false;
  std::string error;

  Eigen::VectorXd test_times, truth;
  Eigen::VectorXd fused_mean, fused_variance;
  Eigen::MatrixXd beta;             // experts x horizon
  Eigen::MatrixXd expert_mean, expert_variance;
  std::vector<int> expert_ids;
  std::vector<std::string> warnings;

  double window_rmse = 0.0;
  double window_mape = 0.0;

  int rounds = 0;
  std::string admm_status;
  double final_max_primal = 0.0;
  double final_dual = 0.0;
  long long scalars_exchanged = 0;
  std::string trace_text;

  double train_seconds = 0.0;
  double predict_seconds = 0.0;
};

struct RunReport {
  std::string config_text;   // canonical echo
  std::vector<WindowResult> windows;
  // aggregates over non-failed windows
  std::vector<double> rmse_per_step;
  std::vector<double> mape_per_step;
  double overall_rmse = 0.0;
  double overall_mape = 0.0;
  int windows_failed = 0;
  double train_seconds_total = 0.0;
  double predict_seconds_total = 0.0;
};

RunReport run_pipeline(const RunConfig& cfg);

/// Loads (or generates) the dataset named by the config.
TimeSeriesDataset resolve_dataset(const RunConfig& cfg);

void write_predictions_csv(const RunReport& report, const std::string& path);
void write_report_json(const RunReport& report, const std::string& path);
void write_admm_trace(const RunReport& report, const std::string& path);
std::string summarize(const RunReport& report);

struct BenchEntry {
  int workers = 0;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
  int rounds = 0;
};

struct BenchReport {
  std::string config_text;
  std::vector<BenchEntry> entries;      // one per K in the sweep
  double dense_train_seconds = -1.0;    // K = 1, Toeplitz off (if compared)
  double toeplitz_train_seconds = -1.0; // K = 1, Toeplitz on
  bool monotone_within_band = false;    // non-increasing outside 10% noise
  bool toeplitz_faster = false;
};

/// Identical fixed-round workload per K: the stopping tolerances are
/// disabled so every sweep entry runs exactly bench.rounds rounds with
/// bench.inner_iters local iterations, timing train and predict phases.
BenchReport bench_pipeline(const RunConfig& cfg);
void write_bench_json(const BenchReport& report, const std::string& path);
std::string summarize(const BenchReport& report);

struct ValidateCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick oracle suite: finite-difference gradients, dense-vs-Toeplitz
/// agreement, QP-vs-grid optimality, fusion algebra identity.
std::vector<ValidateCheck> validate_suite();

}  // namespace sgp
