// sgp/data.hpp
//
// Data ingestion (two-column CSV traffic traces), the synthetic generator
// covering the weekly / daily / dynamic-deviation traffic patterns,
// rolling-window experiment splits, and the RMSE / MAPE metrics.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgp {

struct MalformedRow : std::runtime_error {
  int line;
  explicit MalformedRow(int line_, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_) + ": " + what),
        line(line_) {}
};

struct NonMonotoneTimestamps : std::runtime_error {
  int line;
  explicit NonMonotoneTimestamps(int line_)
      : std::runtime_error("non-monotone timestamp at line " +
                           std::to_string(line_)),
        line(line_) {}
};

struct GapError : std::runtime_error {
  int line;
  explicit GapError(int line_)
      : std::runtime_error("gap in hourly series at line " +
                           std::to_string(line_)),
        line(line_) {}
};

struct ZeroTruth : std::runtime_error {
  ZeroTruth() : std::runtime_error("mape: all truth values are zero") {}
};

/// Hour-resolution series; `start_epoch_hours` is hours since the Unix
/// epoch, values are PRB-usage style traffic units.
struct TimeSeriesDataset {
  std::int64_t start_epoch_hours = 0;
  double interval_hours = 1.0;
  Eigen::VectorXd values;

  Eigen::Index size() const { return values.size(); }
  Eigen::VectorXd time_indices() const;  // 0 .. n-1
};

enum class ImputePolicy { kReject, kLinear };

/// Parses `timestamp,value` CSV with an ISO-8601 hour-aligned, strictly
/// increasing timestamp column.  Gaps are rejected, or filled by linear
/// interpolation under ImputePolicy::kLinear.
TimeSeriesDataset load_csv(const std::string& path,
                           ImputePolicy impute = ImputePolicy::kReject);

void write_csv(const TimeSeriesDataset& data, const std::string& path);

struct SyntheticSpec {
  double weekly_amplitude = 3.0;
  double daily_amplitude = 2.0;
  double deviation_scale = 0.3;
  double noise_scale = 0.2;
  int length = 720;
  std::uint64_t seed = 1;

  void validate() const;
};

/// value(t) = A_w sin(2 pi t / 168) + A_d sin(2 pi t / 24) + deviation(t)
/// + noise(t); the deviation is a seeded Gaussian random walk smoothed over
/// a trailing 6-sample window, the noise white Gaussian.  Bit-reproducible
/// for a fixed spec.
TimeSeriesDataset generate(const SyntheticSpec& spec);

struct Window {
  int index = 0;
  Eigen::VectorXd train_times, train_values;
  Eigen::VectorXd test_times, test_values;
};

/// Window w trains on [w*step, w*step + train_len) and tests on the next
/// `horizon` points; stops when the test block would run past the series.
std::vector<Window> rolling_windows(const TimeSeriesDataset& data,
                                    int train_len, int horizon, int step);

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// Mean absolute percentage error (in percent).  Truth entries with
/// magnitude below 1e-9 are excluded and counted; throws ZeroTruth when
/// nothing remains.
double mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth,
            int* excluded = nullptr);

// Timestamp helpers shared with the CLI.
std::int64_t parse_timestamp_hours(const std::string& text);  // throws
std::string format_timestamp_hours(std::int64_t epoch_hours);

}  // namespace sgp
