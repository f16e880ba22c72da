#include "sgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace sgp {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe =
      (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

// Standard normal from two uniforms; no state beyond the engine, so the
// draw sequence is fixed by the seed alone.
double gaussian(std::mt19937_64& rng) {
  const double u1 =
      (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace

Eigen::VectorXd TimeSeriesDataset::time_indices() const {
  return Eigen::VectorXd::LinSpaced(values.size(), 0.0,
                                    static_cast<double>(values.size() - 1));
}

std::int64_t parse_timestamp_hours(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const int got = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d,
                              &sep, &h, &mi, &s);
  if (got < 6 || (sep != 'T' && sep != ' '))
    throw std::invalid_argument("bad timestamp: " + text);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23)
    throw std::invalid_argument("bad timestamp: " + text);
  if (mi != 0 || (got == 7 && s != 0))
    throw std::invalid_argument("timestamp not hour-aligned: " + text);
  return days_from_civil(y, mo, d) * 24 + h;
}

std::string format_timestamp_hours(std::int64_t epoch_hours) {
  std::int64_t days = epoch_hours / 24;
  int h = static_cast<int>(epoch_hours % 24);
  if (h < 0) {
    h += 24;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00", y, m, d, h);
  return buf;
}

TimeSeriesDataset load_csv(const std::string& path, ImputePolicy impute) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  int lineno = 0;
  if (!std::getline(in, line))
    throw MalformedRow(1, "empty file, expected header");
  ++lineno;

  std::vector<std::int64_t> stamps;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw MalformedRow(lineno, "expected timestamp,value");
    std::int64_t t;
    try {
      t = parse_timestamp_hours(line.substr(0, comma));
    } catch (const std::exception& e) {
      throw MalformedRow(lineno, e.what());
    }
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw MalformedRow(lineno, "bad value field");
    }
    if (!std::isfinite(v)) throw MalformedRow(lineno, "non-finite value");

    if (!stamps.empty()) {
      const std::int64_t gap = t - stamps.back();
      if (gap <= 0) throw NonMonotoneTimestamps(lineno);
      if (gap > 1) {
        if (impute != ImputePolicy::kLinear) throw GapError(lineno);
        const double prev = values.back();
        for (std::int64_t g = 1; g < gap; ++g) {
          const double frac = static_cast<double>(g) / gap;
          stamps.push_back(stamps.back() + 1);
          values.push_back(prev + frac * (v - prev));
        }
      }
    }
    stamps.push_back(t);
    values.push_back(v);
  }
  if (values.size() < 2)
    throw MalformedRow(lineno, "need at least two data rows");

  TimeSeriesDataset data;
  data.start_epoch_hours = stamps.front();
  data.interval_hours = 1.0;
  data.values = Eigen::Map<Eigen::VectorXd>(values.data(), values.size());
  return data;
}

void write_csv(const TimeSeriesDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "timestamp,value\n";
  char buf[64];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.values[i]);
    out << format_timestamp_hours(data.start_epoch_hours + i) << ',' << buf
        << '\n';
  }
}

void SyntheticSpec::validate() const {
  if (length < 2) throw std::invalid_argument("synth: length must be >= 2");
  if (weekly_amplitude != 0.0 && length <= 2 * 168)
    throw std::invalid_argument(
        "synth: weekly term needs more than two weeks of data");
}

TimeSeriesDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.length;
  std::mt19937_64 rng(spec.seed);

  Eigen::VectorXd walk(n), noise(n);
  double w = 0.0;
  for (int t = 0; t < n; ++t) {
    w += gaussian(rng);
    walk[t] = w;
    noise[t] = gaussian(rng);
  }

  TimeSeriesDataset data;
  data.start_epoch_hours = days_from_civil(2015, 9, 1) * 24;
  data.interval_hours = 1.0;
  data.values.resize(n);
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - 5);
    const double smooth = walk.segment(lo, t - lo + 1).mean();
    const double weekly =
        spec.weekly_amplitude *
        std::sin(kTwoPi * std::fmod(static_cast<double>(t), 168.0) / 168.0);
    const double daily =
        spec.daily_amplitude *
        std::sin(kTwoPi * std::fmod(static_cast<double>(t), 24.0) / 24.0);
    data.values[t] = weekly + daily + spec.deviation_scale * smooth +
                     spec.noise_scale * noise[t];
  }
  return data;
}

std::vector<Window> rolling_windows(const TimeSeriesDataset& data,
                                    int train_len, int horizon, int step) {
  if (train_len < 2 || horizon < 1 || step < 1)
    throw std::invalid_argument("rolling_windows: bad window plan");
  std::vector<Window> out;
  const Eigen::Index n = data.size();
  const Eigen::VectorXd t = data.time_indices();
  for (int w = 0;; ++w) {
    const Eigen::Index start = static_cast<Eigen::Index>(w) * step;
    const Eigen::Index test_end = start + train_len + horizon;
    if (test_end > n) break;
    Window win;
    win.index = w;
    win.train_times = t.segment(start, train_len);
    win.train_values = data.values.segment(start, train_len);
    win.test_times = t.segment(start + train_len, horizon);
    win.test_values = data.values.segment(start + train_len, horizon);
    out.push_back(std::move(win));
  }
  return out;
}

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size() || pred.size() == 0)
    throw std::invalid_argument("rmse: length mismatch or empty");
  return std::sqrt((pred - truth).squaredNorm() / pred.size());
}

double mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth,
            int* excluded) {
  if (pred.size() != truth.size() || pred.size() == 0)
    throw std::invalid_argument("mape: length mismatch or empty");
  double acc = 0.0;
  int used = 0, skipped = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) < 1e-9) {
      ++skipped;
      continue;
    }
    acc += std::abs((pred[i] - truth[i]) / truth[i]);
    ++used;
  }
  if (excluded) *excluded = skipped;
  if (used == 0) throw ZeroTruth();
  return acc / used * 100.0;
}

}  // namespace sgp
