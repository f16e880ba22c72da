#include "sgp/runner.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace sgp {

namespace {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string status_name(StopStatus s) {
  switch (s) {
    case StopStatus::kConverged: return "converged";
    case StopStatus::kCapped: return "capped";
    case StopStatus::kContinue: return "continue";
  }
  return "?";
}

double sigma2_from_policy(const RunConfig& cfg, const Eigen::VectorXd& fit) {
  if (cfg.noise_policy == "fixed") return cfg.noise_value;
  return estimate_noise_variance(fit);
}

AdmmConfig admm_config_for(const RunConfig& cfg) {
  AdmmConfig a = cfg.admm;
  a.seed = cfg.seed;
  a.threads = cfg.threads;
  return a;
}

FusionOptions fusion_options_for(const RunConfig& cfg) {
  FusionOptions f;
  f.strategy = cfg.strategy;
  f.concatenate = cfg.concatenate;
  f.mirror.iterations = cfg.mirror_iterations;
  f.gp = cfg.gp;
  return f;
}

double safe_mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  try {
    return mape(pred, truth);
  } catch (const ZeroTruth&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TimeSeriesDataset resolve_dataset(const RunConfig& cfg) {
  if (!cfg.use_synth()) return load_csv(cfg.csv_path, cfg.impute);
  SyntheticSpec spec = cfg.synth;
  spec.seed = cfg.synth_seed();
  return generate(spec);
}

RunReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  RunReport report;
  report.config_text = canonical_text(cfg);

  const TimeSeriesDataset dataset = resolve_dataset(cfg);
  std::vector<Window> windows =
      rolling_windows(dataset, cfg.train_len, cfg.horizon, cfg.step);
  if (windows.empty())
    throw ConfigError("window plan yields no windows for this dataset");
  if (static_cast<int>(windows.size()) > cfg.repeats)
    windows.resize(cfg.repeats);

  const AdmmConfig admm_cfg = admm_config_for(cfg);
  const FusionOptions fopts = fusion_options_for(cfg);

  for (const Window& w : windows) {
    WindowResult res;
    res.index = w.index;
    res.test_times = w.test_times;
    res.truth = w.test_values;
    try {
      const Series training{w.train_times, w.train_values};
      auto [fit, val] = split_validation(training, cfg.validation_points);

      const double sigma2_e = sigma2_from_policy(cfg, fit.values);
      const HyperParams init = default_init(fit.values, sigma2_e);

      const auto t0 = clock_type::now();
      TrainResult tr =
          train(fit.times, fit.values, admm_cfg, cfg.kernel, cfg.gp, init);
      res.train_seconds = seconds_since(t0);
      res.rounds = tr.state.round;
      res.admm_status = status_name(tr.status);
      if (!tr.state.history.empty()) {
        res.final_max_primal =
            tr.state.history.back().primal_norms.maxCoeff();
        res.final_dual = tr.state.history.back().dual_norm;
      }
      res.scalars_exchanged = tr.state.scalars_exchanged;
      res.trace_text = format_trace(tr.state);

      const auto t1 = clock_type::now();
      FusedPrediction fused = predict_fused(tr.z, tr.shards, val,
                                            w.test_times, cfg.kernel, fopts);
      res.predict_seconds = seconds_since(t1);

      res.fused_mean = fused.mean;
      res.fused_variance = fused.variance;
      res.beta = fused.beta;
      res.expert_mean = fused.expert_mean;
      res.expert_variance = fused.expert_variance;
      res.expert_ids = fused.expert_ids;
      res.warnings = fused.warnings;
      res.window_rmse = rmse(fused.mean, w.test_values);
      res.window_mape = safe_mape(fused.mean, w.test_values);
    } catch (const std::exception& e) {
      res.failed = true;
      res.error = e.what();
      report.windows_failed += 1;
    }
    report.train_seconds_total += res.train_seconds;
    report.predict_seconds_total += res.predict_seconds;
    report.windows.push_back(std::move(res));
  }

  // aggregates per horizon step over non-failed windows
  report.rmse_per_step.assign(cfg.horizon, 0.0);
  report.mape_per_step.assign(cfg.horizon, 0.0);
  std::vector<double> pool_pred, pool_truth;
  for (int s = 0; s < cfg.horizon; ++s) {
    std::vector<double> p, t;
    for (const WindowResult& res : report.windows) {
      if (res.failed) continue;
      p.push_back(res.fused_mean[s]);
      t.push_back(res.truth[s]);
    }
    if (p.empty()) {
      report.rmse_per_step[s] = std::numeric_limits<double>::quiet_NaN();
      report.mape_per_step[s] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    Eigen::Map<Eigen::VectorXd> pv(p.data(), p.size());
    Eigen::Map<Eigen::VectorXd> tv(t.data(), t.size());
    report.rmse_per_step[s] = rmse(pv, tv);
    report.mape_per_step[s] = safe_mape(pv, tv);
    pool_pred.insert(pool_pred.end(), p.begin(), p.end());
    pool_truth.insert(pool_truth.end(), t.begin(), t.end());
  }
  if (!pool_pred.empty()) {
    Eigen::Map<Eigen::VectorXd> pv(pool_pred.data(), pool_pred.size());
    Eigen::Map<Eigen::VectorXd> tv(pool_truth.data(), pool_truth.size());
    report.overall_rmse = rmse(pv, tv);
    report.overall_mape = safe_mape(pv, tv);
  } else {
    report.overall_rmse = std::numeric_limits<double>::quiet_NaN();
    report.overall_mape = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

void write_predictions_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "window,step,time,truth,mean,variance,beta,expert_means,"
         "expert_variances\n";
  for (const WindowResult& w : report.windows) {
    if (w.failed) continue;
    const int horizon = static_cast<int>(w.fused_mean.size());
    for (int s = 0; s < horizon; ++s) {
      out << w.index << ',' << (s + 1) << ',' << fmt17(w.test_times[s]) << ','
          << fmt17(w.truth[s]) << ',' << fmt17(w.fused_mean[s]) << ','
          << fmt17(w.fused_variance[s]) << ',';
      for (Eigen::Index i = 0; i < w.beta.rows(); ++i)
        out << (i ? ";" : "") << fmt17(w.beta(i, s));
      out << ',';
      for (Eigen::Index i = 0; i < w.expert_mean.rows(); ++i)
        out << (i ? ";" : "") << fmt17(w.expert_mean(i, s));
      out << ',';
      for (Eigen::Index i = 0; i < w.expert_variance.rows(); ++i)
        out << (i ? ";" : "") << fmt17(w.expert_variance(i, s));
      out << '\n';
    }
  }
}

void write_report_json(const RunReport& report, const std::string& path) {
  json j;
  j["version"] = "0.1.0";
  j["config"] = report.config_text;
  j["aggregates"] = {
      {"rmse_per_step", report.rmse_per_step},
      {"mape_per_step", report.mape_per_step},
      {"overall_rmse", report.overall_rmse},
      {"overall_mape", report.overall_mape},
  };
  j["totals"] = {
      {"windows", report.windows.size()},
      {"failed", report.windows_failed},
      {"train_seconds", report.train_seconds_total},
      {"predict_seconds", report.predict_seconds_total},
  };
  j["windows"] = json::array();
  for (const WindowResult& w : report.windows) {
    json wj = {
        {"index", w.index},
        {"failed", w.failed},
        {"rmse", w.window_rmse},
        {"mape", w.window_mape},
        {"rounds", w.rounds},
        {"admm_status", w.admm_status},
        {"final_max_primal", w.final_max_primal},
        {"final_dual", w.final_dual},
        {"scalars_exchanged", w.scalars_exchanged},
        {"train_seconds", w.train_seconds},
        {"predict_seconds", w.predict_seconds},
        {"experts", w.expert_ids},
        {"warnings", w.warnings},
    };
    if (w.failed) wj["error"] = w.error;
    j["windows"].push_back(std::move(wj));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_admm_trace(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const WindowResult& w : report.windows) {
    out << "# window " << w.index << " status=" << w.admm_status
        << " rounds=" << w.rounds << " scalars=" << w.scalars_exchanged
        << '\n';
    if (!w.failed) out << w.trace_text;
  }
}

std::string summarize(const RunReport& report) {
  std::ostringstream os;
  os << "windows: " << report.windows.size() << " (" << report.windows_failed
     << " failed)\n";
  os << "overall rmse: " << report.overall_rmse
     << "  mape: " << report.overall_mape << "%\n";
  os << "per-step rmse:";
  for (double v : report.rmse_per_step) os << ' ' << v;
  os << "\nper-step mape:";
  for (double v : report.mape_per_step) os << ' ' << v;
  os << "\ntrain time: " << report.train_seconds_total
     << " s, predict time: " << report.predict_seconds_total << " s\n";
  return os.str();
}

namespace {

// One fixed-round training + fused prediction, timed.
BenchEntry bench_once(const RunConfig& cfg, const TimeSeriesDataset& dataset,
                      int workers, bool use_toeplitz) {
  RunConfig c = cfg;
  c.admm.workers = workers;
  c.admm.max_rounds = cfg.bench_rounds;
  c.admm.eps_abs = 1e-300;  // disable early stopping: identical workload
  c.admm.eps_rel = 1e-300;
  c.gp.use_toeplitz = use_toeplitz;
  c.gp.max_iterations = cfg.bench_inner_iterations;

  const Eigen::VectorXd times = dataset.time_indices().head(c.train_len);
  const Eigen::VectorXd values = dataset.values.head(c.train_len);
  const Series training{times, values};
  auto [fit, val] = split_validation(training, c.validation_points);
  Eigen::VectorXd test_times(c.horizon);
  for (int i = 0; i < c.horizon; ++i)
    test_times[i] = static_cast<double>(c.train_len + i);

  const double sigma2_e = sigma2_from_policy(c, fit.values);
  const HyperParams init = default_init(fit.values, sigma2_e);
  const AdmmConfig admm_cfg = admm_config_for(c);
  const FusionOptions fopts = fusion_options_for(c);

  BenchEntry entry;
  entry.workers = workers;
  entry.train_seconds = std::numeric_limits<double>::infinity();
  entry.predict_seconds = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 2; ++rep) {
    const auto t0 = clock_type::now();
    TrainResult tr =
        train(fit.times, fit.values, admm_cfg, c.kernel, c.gp, init);
    entry.train_seconds = std::min(entry.train_seconds, seconds_since(t0));
    entry.rounds = tr.state.round;

    const auto t1 = clock_type::now();
    predict_fused(tr.z, tr.shards, val, test_times, c.kernel, fopts);
    entry.predict_seconds =
        std::min(entry.predict_seconds, seconds_since(t1));
  }
  return entry;
}

}  // namespace

BenchReport bench_pipeline(const RunConfig& cfg) {
  cfg.validate();
  BenchReport report;
  report.config_text = canonical_text(cfg);
  const TimeSeriesDataset dataset = resolve_dataset(cfg);
  if (dataset.size() < cfg.train_len + cfg.horizon)
    throw ConfigError("dataset too short for the bench window");

  for (int k : cfg.k_sweep)
    report.entries.push_back(
        bench_once(cfg, dataset, k, cfg.gp.use_toeplitz));

  report.monotone_within_band = true;
  for (std::size_t i = 0; i + 1 < report.entries.size(); ++i)
    if (report.entries[i + 1].train_seconds >
        1.10 * report.entries[i].train_seconds)
      report.monotone_within_band = false;

  if (cfg.bench_toeplitz_compare) {
    double tplz = -1.0;
    if (cfg.gp.use_toeplitz)
      for (const BenchEntry& e : report.entries)
        if (e.workers == 1) tplz = e.train_seconds;
    if (tplz < 0.0)
      tplz = bench_once(cfg, dataset, 1, true).train_seconds;
    const double dense = bench_once(cfg, dataset, 1, false).train_seconds;
    report.toeplitz_train_seconds = tplz;
    report.dense_train_seconds = dense;
    report.toeplitz_faster = tplz < dense;
  }
  return report;
}

void write_bench_json(const BenchReport& report, const std::string& path) {
  json j;
  j["version"] = "0.1.0";
  j["config"] = report.config_text;
  j["entries"] = json::array();
  for (const BenchEntry& e : report.entries)
    j["entries"].push_back({{"workers", e.workers},
                            {"train_seconds", e.train_seconds},
                            {"predict_seconds", e.predict_seconds},
                            {"rounds", e.rounds}});
  j["dense_train_seconds"] = report.dense_train_seconds;
  j["toeplitz_train_seconds"] = report.toeplitz_train_seconds;
  j["monotone_within_band"] = report.monotone_within_band;
  j["toeplitz_faster"] = report.toeplitz_faster;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::string summarize(const BenchReport& report) {
  std::ostringstream os;
  os << "workers  train_s  predict_s\n";
  char buf[96];
  for (const BenchEntry& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%7d  %7.3f  %9.4f\n", e.workers,
                  e.train_seconds, e.predict_seconds);
    os << buf;
  }
  if (report.dense_train_seconds >= 0.0) {
    std::snprintf(buf, sizeof(buf),
                  "K=1 toeplitz %.3f s vs dense %.3f s (%s)\n",
                  report.toeplitz_train_seconds, report.dense_train_seconds,
                  report.toeplitz_faster ? "toeplitz faster" : "dense faster");
    os << buf;
  }
  os << "training time monotone non-increasing in K (10% band): "
     << (report.monotone_within_band ? "yes" : "NO") << "\n";
  return os.str();
}

namespace {

Shard random_shard(std::mt19937_64& rng, int n, bool regular) {
  std::uniform_real_distribution<double> unif(0.2, 1.8);
  Eigen::VectorXd t(n), v(n);
  double pos = 0.0;
  for (int i = 0; i < n; ++i) {
    pos += regular ? 1.0 : unif(rng);
    t[i] = pos;
    v[i] = std::sin(0.3 * pos) + 0.1 * unif(rng);
  }
  return make_shard(std::move(t), std::move(v));
}

HyperParams random_hypers(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> logv(-1.0, 1.0);
  HyperParams hp;
  hp.sigma2_p1 = std::exp(logv(rng));
  hp.sigma2_p2 = std::exp(logv(rng));
  hp.sigma2_lt = std::exp(logv(rng));
  hp.l2_p1 = std::exp(logv(rng));
  hp.l2_p2 = std::exp(logv(rng));
  hp.l2_lt = std::exp(logv(rng) + 1.5);
  hp.sigma2_e = 0.05 + 0.2 * std::abs(logv(rng));
  return hp;
}

}  // namespace

std::vector<ValidateCheck> validate_suite() {
  std::vector<ValidateCheck> checks;
  std::mt19937_64 rng(42);
  const KernelSpec spec{24.0, 8.0, kTermAll};

  {  // analytic gradient vs central finite differences
    ValidateCheck c{"nll-gradient-vs-finite-differences", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
      const Shard shard = random_shard(rng, 12 + trial, trial % 2 == 0);
      const HyperParams hp = random_hypers(rng);
      const Eigen::VectorXd g = nll_grad(shard, hp, spec);
      const Eigen::VectorXd x = hp.log_vector();
      for (int p = 0; p < kNumHypers; ++p) {
        Eigen::VectorXd xp = x, xm = x;
        xp[p] += 1e-6;
        xm[p] -= 1e-6;
        const double fd = (nll(shard, HyperParams::from_log_vector(xp), spec) -
                           nll(shard, HyperParams::from_log_vector(xm), spec)) /
                          2e-6;
        const double rel =
            std::abs(g[p] - fd) / std::max(1e-6, std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
    c.passed = worst <= 1e-4;
    c.detail = "max relative error " + fmt17(worst);
    checks.push_back(std::move(c));
  }

  {  // Toeplitz fast path vs dense Cholesky
    ValidateCheck c{"toeplitz-vs-dense", true, ""};
    const int n = 64;
    const HyperParams hp = random_hypers(rng);
    Eigen::VectorXd col(n);
    for (int k = 0; k < n; ++k)
      col[k] = eval_composite(static_cast<double>(k), hp, spec);
    col[0] += hp.sigma2_e;
    ToeplitzOperator top(col);
    SpdFactorization chol(top.dense());
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) b[i] = std::cos(0.2 * i);
    const double solve_err =
        (top.solve(b) - chol.solve(b)).norm() / chol.solve(b).norm();
    const double logdet_err = std::abs(top.log_det() - chol.log_det());
    c.passed = solve_err <= 1e-6 && logdet_err <= 1e-6;
    c.detail = "solve rel " + fmt17(solve_err) + ", logdet abs " +
               fmt17(logdet_err);
    checks.push_back(std::move(c));
  }

  {  // QP weights vs simplex grid search
    ValidateCheck c{"qp-vs-grid-search", true, ""};
    double worst = -1e9;
    for (int trial = 0; trial < 5; ++trial) {
      const int k = 3;
      Eigen::MatrixXd mean(k, 1), var(k, 1);
      std::uniform_real_distribution<double> unif(-2.0, 2.0);
      for (int i = 0; i < k; ++i) {
        mean(i, 0) = unif(rng);
        var(i, 0) = 0.3 + std::abs(unif(rng));
      }
      const double truth = unif(rng);
      const auto locals = LocalPredictionSet::make(mean, var);
      const FusionWeights w = solve_qp_single(locals, truth);
      const double qp_obj =
          fusion_objective(locals, Eigen::VectorXd::Constant(1, truth),
                           w.beta);
      double grid_best = std::numeric_limits<double>::infinity();
      const int steps = 1000;
      for (int i = 0; i <= steps; ++i)
        for (int j = 0; j <= steps - i; ++j) {
          Eigen::Vector3d beta(static_cast<double>(i) / steps,
                               static_cast<double>(j) / steps,
                               static_cast<double>(steps - i - j) / steps);
          grid_best = std::min(
              grid_best,
              fusion_objective(locals, Eigen::VectorXd::Constant(1, truth),
                               beta));
        }
      worst = std::max(worst, qp_obj - grid_best);
    }
    c.passed = worst <= 1e-6;
    c.detail = "max (qp - grid) objective gap " + fmt17(worst);
    checks.push_back(std::move(c));
  }

  {  // fused moments recomputed straight from the PoE formulas
    ValidateCheck c{"fusion-algebra", true, ""};
    const int k = 4, m = 6;
    Eigen::MatrixXd mean(k, m), var(k, m);
    std::uniform_real_distribution<double> unif(0.1, 2.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < m; ++j) {
        mean(i, j) = unif(rng) - 1.0;
        var(i, j) = unif(rng);
      }
    Eigen::VectorXd beta(k);
    for (int i = 0; i < k; ++i) beta[i] = unif(rng);
    beta /= beta.sum();
    const auto locals = LocalPredictionSet::make(mean, var);
    const FusedPrediction fused = fuse(locals, FusionWeights{beta});
    double worst = 0.0;
    for (int j = 0; j < m; ++j) {
      double denom = 0.0, num = 0.0;
      for (int i = 0; i < k; ++i) {
        denom += beta[i] / var(i, j);
        num += beta[i] * mean(i, j) / var(i, j);
      }
      worst = std::max(worst, std::abs(fused.variance[j] - 1.0 / denom));
      worst = std::max(worst, std::abs(fused.mean[j] - num / denom));
    }
    c.passed = worst <= 1e-12;
    c.detail = "max deviation " + fmt17(worst);
    checks.push_back(std::move(c));
  }

  return checks;
}

}  // namespace sgp
