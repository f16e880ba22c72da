#include "sgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

namespace sgp {

namespace {

constexpr double kVarianceFloor = 1e-12;

double jitter_for(const HyperParams& hp, const KernelSpec& spec,
                  const GpOptions& opts) {
  // trace-mean of C(theta) = k(0) + sigma2_e
  return opts.jitter_scale * (eval_composite(0.0, hp, spec) + hp.sigma2_e);
}

Eigen::MatrixXd dense_cov(const Shard& shard, const HyperParams& hp,
                          const KernelSpec& spec, double jitter) {
  Eigen::MatrixXd c = kernel_matrix(shard.times, shard.times, hp, spec);
  c.diagonal().array() += hp.sigma2_e + jitter;
  return c;
}

// Factorizes C with one jitter escalation (x10) before giving up.
SpdFactorization dense_chol(const Shard& shard, const HyperParams& hp,
                            const KernelSpec& spec, const GpOptions& opts,
                            double* jitter_used = nullptr) {
  const double jit = jitter_for(hp, spec, opts);
  try {
    if (jitter_used) *jitter_used = jit;
    return SpdFactorization(dense_cov(shard, hp, spec, jit));
  } catch (const NotPositiveDefinite&) {
    if (jitter_used) *jitter_used = 10.0 * jit;
    return SpdFactorization(dense_cov(shard, hp, spec, 10.0 * jit));
  }
}

Eigen::VectorXd toeplitz_first_column(const Shard& shard,
                                      const HyperParams& hp,
                                      const KernelSpec& spec, double jitter) {
  const Eigen::Index n = shard.size();
  const double h = shard.times[1] - shard.times[0];
  Eigen::VectorXd col(n);
  for (Eigen::Index k = 0; k < n; ++k)
    col[k] = eval_composite(static_cast<double>(k) * h, hp, spec);
  col[0] += hp.sigma2_e + jitter;
  return col;
}

bool toeplitz_eligible(const Shard& shard, const GpOptions& opts) {
  return opts.use_toeplitz && shard.regular_grid && shard.size() > 1;
}

// Diagonal sums s[l] = sum_i (M(i,i+l) + M(i+l,i)) for l >= 1, s[0] = tr(M).
Eigen::VectorXd diagonal_sums(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd s(n);
  s[0] = m.trace();
  for (Eigen::Index l = 1; l < n; ++l)
    s[l] = m.diagonal(l).sum() + m.diagonal(-l).sum();
  return s;
}

// a[0] = |g|^2, a[l] = 2 sum_i g_i g_{i+l}: the lag representation of the
// rank-one term gamma gamma^T.
Eigen::VectorXd autocorrelation(const Eigen::VectorXd& g) {
  const Eigen::Index n = g.size();
  Eigen::VectorXd a(n);
  a[0] = g.squaredNorm();
  for (Eigen::Index l = 1; l < n; ++l)
    a[l] = 2.0 * g.head(n - l).dot(g.tail(n - l));
  return a;
}

Eigen::MatrixXd rademacher_probes(Eigen::Index n, int count,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd z(n, count);
  for (int j = 0; j < count; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      z(i, j) = (rng() & 1u) ? 1.0 : -1.0;
  return z;
}

}  // namespace

void Shard::validate() const {
  if (times.size() != values.size())
    throw std::invalid_argument("Shard: times/values length mismatch");
  if (times.size() < 2) throw std::invalid_argument("Shard: need >= 2 points");
  for (Eigen::Index i = 0; i + 1 < times.size(); ++i)
    if (!(times[i] < times[i + 1]))
      throw std::invalid_argument("Shard: times must be strictly increasing");
}

Shard make_shard(Eigen::VectorXd times, Eigen::VectorXd values) {
  Shard s{std::move(times), std::move(values), false};
  s.regular_grid = is_regular_grid(s.times);
  return s;
}

double nll(const Shard& shard, const HyperParams& hp, const KernelSpec& spec,
           const GpOptions& opts) {
  hp.validate();
  spec.validate();
  const double jit = jitter_for(hp, spec, opts);
  if (toeplitz_eligible(shard, opts)) {
    try {
      ToeplitzOperator c(toeplitz_first_column(shard, hp, spec, jit));
      const Eigen::VectorXd alpha = c.solve(shard.values);
      return shard.values.dot(alpha) + c.log_det();
    } catch (const ToeplitzBreakdown&) {
      // fall through to the dense path
    }
  }
  const SpdFactorization chol = dense_chol(shard, hp, spec, opts);
  return shard.values.dot(chol.solve(shard.values)) + chol.log_det();
}

Eigen::VectorXd nll_grad(const Shard& shard, const HyperParams& hp,
                         const KernelSpec& spec, const GpOptions& opts) {
  hp.validate();
  spec.validate();
  const Eigen::Index n = shard.size();
  const double jit = jitter_for(hp, spec, opts);
  Eigen::VectorXd grad(kNumHypers);

  if (toeplitz_eligible(shard, opts)) {
    try {
      const Eigen::VectorXd col = toeplitz_first_column(shard, hp, spec, jit);
      ToeplitzOperator c(col);
      const Eigen::VectorXd gamma = c.solve(shard.values);

      // Lag representation: Tr((C^{-1} - gamma gamma^T) G_p) = <d_p, s - a>
      // where d_p is the first column of the (Toeplitz) derivative G_p.
      Eigen::VectorXd s(n);
      if (n <= opts.trace_cutoff) {
        Eigen::MatrixXd cinv(n, n);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        for (Eigen::Index j = 0; j < n; ++j) {
          e[j] = 1.0;
          cinv.col(j) = c.solve(e);
          e[j] = 0.0;
        }
        s = diagonal_sums(cinv);
      } else {
        const Eigen::MatrixXd z =
            rademacher_probes(n, opts.hutchinson_probes, opts.hutchinson_seed);
        Eigen::MatrixXd w(n, opts.hutchinson_probes);
        for (int j = 0; j < opts.hutchinson_probes; ++j)
          w.col(j) = c.solve(z.col(j));
        const Eigen::MatrixXd ghat =
            (w * z.transpose()) / static_cast<double>(opts.hutchinson_probes);
        s = diagonal_sums(ghat);
      }
      const Eigen::VectorXd a = autocorrelation(gamma);
      const Eigen::VectorXd weights = s - a;

      const double h = shard.times[1] - shard.times[0];
      for (int p = 0; p < kNumHypers; ++p) {
        Eigen::VectorXd d(n);
        for (Eigen::Index l = 0; l < n; ++l)
          d[l] =
              eval_composite_grad(static_cast<double>(l) * h, hp, spec, p);
        grad[p] = d.dot(weights) * hp.value(p);
      }
      return grad;
    } catch (const ToeplitzBreakdown&) {
      // fall through to the dense path
    }
  }

  const SpdFactorization chol = dense_chol(shard, hp, spec, opts);
  const Eigen::MatrixXd cinv = chol.inverse();
  const Eigen::VectorXd gamma = chol.solve(shard.values);
  for (int p = 0; p < kNumHypers; ++p) {
    const Eigen::MatrixXd gp = kernel_matrix_grad(shard.times, hp, spec, p);
    const double t1 = cinv.cwiseProduct(gp).sum();
    const double t2 = gamma.dot(gp * gamma);
    grad[p] = (t1 - t2) * hp.value(p);
  }
  return grad;
}

namespace {

// Box bounds on the log-domain iterates.  The likelihood is flat along
// several ridges (a periodic term with a huge squared length-scale turns
// constant), and an unbounded ridge walk would keep the ADMM consensus from
// ever settling.  exp(+-18) is far outside any useful hyperparameter range.
constexpr double kLogLower = -18.0;
constexpr double kLogUpper = 18.0;

Eigen::VectorXd clamp_box(Eigen::VectorXd x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], kLogLower, kLogUpper);
  return x;
}

// Gradient with the components pointing out of the box zeroed; a coordinate
// pinned at its bound is stationary.
Eigen::VectorXd project_gradient(const Eigen::VectorXd& x,
                                 Eigen::VectorXd g) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= kLogLower && g[i] > 0.0) g[i] = 0.0;
    if (x[i] >= kLogUpper && g[i] < 0.0) g[i] = 0.0;
  }
  return g;
}

struct ProximalTerm {
  const std::optional<Proximal>& prox;

  double value(const Eigen::VectorXd& x) const {
    if (!prox) return 0.0;
    const Eigen::VectorXd d = x - prox->z;
    return prox->zeta.dot(d) + 0.5 * prox->rho * d.squaredNorm();
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    if (!prox) return Eigen::VectorXd::Zero(x.size());
    return prox->zeta + prox->rho * (x - prox->z);
  }
};

}  // namespace

FitResult fit_local(const Shard& shard, const HyperParams& init,
                    const KernelSpec& spec,
                    const std::optional<Proximal>& prox,
                    const GpOptions& opts) {
  init.validate();
  const ProximalTerm pterm{prox};
  const int nfree = opts.optimize_noise ? kNumHypers : kNumHypers - 1;

  auto objective = [&](const Eigen::VectorXd& x) -> double {
    const HyperParams hp = HyperParams::from_log_vector(x);
    const double f = nll(shard, hp, spec, opts) + pterm.value(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  };
  auto gradient = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const HyperParams hp = HyperParams::from_log_vector(x);
    Eigen::VectorXd g = nll_grad(shard, hp, spec, opts) + pterm.gradient(x);
    for (int i = nfree; i < kNumHypers; ++i) g[i] = 0.0;  // frozen coords
    return g;
  };

  Eigen::VectorXd x = clamp_box(init.log_vector());
  FitResult result;
  result.hp = init;

  double fx;
  Eigen::VectorXd gx;
  try {
    fx = objective(x);
    gx = gradient(x);
  } catch (const std::exception&) {
    result.failed = true;
    return result;
  }
  if (!std::isfinite(fx)) {
    result.failed = true;
    return result;
  }

  double best_f = fx;
  Eigen::VectorXd best_x = x;

  constexpr int kMemory = 8;
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  bool converged = false;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    if (project_gradient(x, gx).norm() <= opts.gradient_tolerance) {
      converged = true;
      break;
    }

    // L-BFGS two-loop recursion
    Eigen::VectorXd d = -gx;
    if (!s_hist.empty()) {
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(d);
        d -= alpha[i] * y_hist[i];
      }
      const double gamma_scale =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      d *= gamma_scale;
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double beta = rho_hist[i] * y_hist[i].dot(d);
        d += (alpha[i] - beta) * s_hist[i];
      }
    }
    double dir_deriv = gx.dot(d);
    if (!(dir_deriv < 0.0)) {  // not a descent direction; reset
      d = -gx;
      dir_deriv = gx.dot(d);
    }

    // Backtracking Armijo line search, projected onto the log-domain box
    constexpr double kC1 = 1e-4;
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = clamp_box(x + step * d);
      const Eigen::VectorXd moved = x_new - x;
      if (moved.norm() == 0.0) break;  // pinned at the bounds
      try {
        f_new = objective(x_new);
      } catch (const std::exception&) {
        f_new = std::numeric_limits<double>::infinity();
      }
      if (f_new <= fx + kC1 * std::min(0.0, gx.dot(moved))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search stalled; keep best iterate

    Eigen::VectorXd g_new;
    try {
      g_new = gradient(x_new);
    } catch (const std::exception&) {
      x = x_new;
      fx = f_new;
      if (f_new < best_f) {
        best_f = f_new;
        best_x = x_new;
      }
      break;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - gx;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    fx = f_new;
    gx = g_new;
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  }

  result.hp = HyperParams::from_log_vector(best_x);
  if (!opts.optimize_noise) result.hp.sigma2_e = init.sigma2_e;
  result.converged = converged;
  result.iterations = iter;
  result.objective = best_f;
  result.nll_value = best_f - pterm.value(best_x);
  try {
    result.grad_norm = project_gradient(best_x, gradient(best_x)).norm();
  } catch (const std::exception&) {
    result.grad_norm = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

LocalModel::LocalModel(Shard shard, HyperParams hp, KernelSpec spec,
                       const GpOptions& opts)
    : shard_(std::move(shard)), hp_(hp), spec_(spec) {
  shard_.validate();
  hp_.validate();
  spec_.validate();
  chol_ = std::make_shared<const SpdFactorization>(
      dense_chol(shard_, hp_, spec_, opts, &jitter_));
  alpha_ = chol_->solve(shard_.values);
}

double LocalModel::prior_variance() const {
  return eval_composite(0.0, hp_, spec_);
}

PosteriorPrediction LocalModel::predict(
    const Eigen::VectorXd& test_times) const {
  if (test_times.size() == 0)
    throw std::invalid_argument("predict: empty test grid");
  const Eigen::MatrixXd kx =
      kernel_matrix(shard_.times, test_times, hp_, spec_);
  const Eigen::MatrixXd v = chol_->solve(kx);
  const double k0 = prior_variance();

  PosteriorPrediction out;
  out.mean = kx.transpose() * alpha_;
  out.variance.resize(test_times.size());
  for (Eigen::Index i = 0; i < test_times.size(); ++i) {
    const double var = k0 - kx.col(i).dot(v.col(i));
    out.variance[i] = std::clamp(var, kVarianceFloor, k0 + jitter_);
  }
  return out;
}

double estimate_noise_variance(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  if (n < 3) return 1e-6;
  Eigen::VectorXd d = values.tail(n - 1) - values.head(n - 1);
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / d.size();
  const double series_mean = values.mean();
  const double series_var =
      (values.array() - series_mean).square().sum() / n;
  return std::max({0.5 * var, 1e-8 * series_var, 1e-12});
}

HyperParams default_init(const Eigen::VectorXd& values, double sigma2_e) {
  const double mean = values.size() > 0 ? values.mean() : 0.0;
  double var = values.size() > 0
                   ? (values.array() - mean).square().sum() / values.size()
                   : 1.0;
  if (!(var > 0.0)) var = 1.0;
  HyperParams hp;
  hp.sigma2_p1 = var;
  hp.sigma2_p2 = var;
  hp.sigma2_lt = var;
  hp.l2_p1 = 1.0;
  hp.l2_p2 = 1.0;
  hp.l2_lt = 1.0;
  hp.sigma2_e = sigma2_e;
  return hp;
}

}  // namespace sgp
