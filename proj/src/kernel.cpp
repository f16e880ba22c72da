#include "sgp/kernel.hpp"

#include <cmath>

namespace sgp {

namespace {

constexpr double kPi = 3.14159265358979323846;

// sin^2(pi * tau / lambda) with the phase reduced to [0, lambda/2], the
// symmetry axis of sin^2.  fmod and the half-period fold are exact for
// integer lags, so period shifts and sign flips reproduce values bitwise.
double periodic_arg(double tau, double lambda) {
  double phase = std::abs(std::fmod(tau, lambda));
  if (phase > 0.5 * lambda) phase = lambda - phase;
  const double s = std::sin(kPi * phase / lambda);
  return s * s;
}

}  // namespace

double HyperParams::value(int index) const {
  switch (index) {
    case kSigma2P1: return sigma2_p1;
    case kSigma2P2: return sigma2_p2;
    case kSigma2Lt: return sigma2_lt;
    case kL2P1: return l2_p1;
    case kL2P2: return l2_p2;
    case kL2Lt: return l2_lt;
    case kSigma2E: return sigma2_e;
    default: throw std::out_of_range("HyperParams::value: bad index");
  }
}

void HyperParams::set_value(int index, double v) {
  switch (index) {
    case kSigma2P1: sigma2_p1 = v; break;
    case kSigma2P2: sigma2_p2 = v; break;
    case kSigma2Lt: sigma2_lt = v; break;
    case kL2P1: l2_p1 = v; break;
    case kL2P2: l2_p2 = v; break;
    case kL2Lt: l2_lt = v; break;
    case kSigma2E: sigma2_e = v; break;
    default: throw std::out_of_range("HyperParams::set_value: bad index");
  }
}

Eigen::VectorXd HyperParams::log_vector() const {
  Eigen::VectorXd v(kNumHypers);
  for (int i = 0; i < kNumHypers; ++i) v[i] = std::log(value(i));
  return v;
}

HyperParams HyperParams::from_log_vector(const Eigen::VectorXd& v) {
  if (v.size() != kNumHypers)
    throw std::invalid_argument("from_log_vector: expected 7 components");
  HyperParams hp;
  for (int i = 0; i < kNumHypers; ++i) hp.set_value(i, std::exp(v[i]));
  return hp;
}

void HyperParams::validate() const {
  for (int i = 0; i < kNumHypers; ++i) {
    const double v = value(i);
    if (!std::isfinite(v) || v <= 0.0)
      throw std::invalid_argument("HyperParams: component " +
                                  std::to_string(i) +
                                  " must be finite and > 0");
  }
}

void KernelSpec::validate() const {
  if (!(lambda1 > lambda2) || !(lambda2 > 0.0))
    throw std::invalid_argument("KernelSpec: need lambda1 > lambda2 > 0");
  if ((active_terms & kTermAll) == 0)
    throw std::invalid_argument("KernelSpec: at least one term must be active");
}

double eval_k1(double tau, const HyperParams& hp, const KernelSpec& spec) {
  return hp.sigma2_p1 * std::exp(-periodic_arg(tau, spec.lambda1) / hp.l2_p1);
}

double eval_k2(double tau, const HyperParams& hp, const KernelSpec& spec) {
  return hp.sigma2_p2 * std::exp(-periodic_arg(tau, spec.lambda2) / hp.l2_p2);
}

double eval_k3(double tau, const HyperParams& hp) {
  return hp.sigma2_lt * std::exp(-tau * tau / (2.0 * hp.l2_lt));
}

double eval_composite(double tau, const HyperParams& hp,
                      const KernelSpec& spec) {
  double k = 0.0;
  if (spec.has(kTermWeekly)) k += eval_k1(tau, hp, spec);
  if (spec.has(kTermDaily)) k += eval_k2(tau, hp, spec);
  if (spec.has(kTermSe)) k += eval_k3(tau, hp);
  return k;
}

double eval_composite_grad(double tau, const HyperParams& hp,
                           const KernelSpec& spec, int which) {
  switch (which) {
    case kSigma2P1:
      return spec.has(kTermWeekly)
                 ? std::exp(-periodic_arg(tau, spec.lambda1) / hp.l2_p1)
                 : 0.0;
    case kSigma2P2:
      return spec.has(kTermDaily)
                 ? std::exp(-periodic_arg(tau, spec.lambda2) / hp.l2_p2)
                 : 0.0;
    case kSigma2Lt:
      return spec.has(kTermSe) ? std::exp(-tau * tau / (2.0 * hp.l2_lt)) : 0.0;
    case kL2P1: {
      if (!spec.has(kTermWeekly)) return 0.0;
      const double s = periodic_arg(tau, spec.lambda1);
      return eval_k1(tau, hp, spec) * s / (hp.l2_p1 * hp.l2_p1);
    }
    case kL2P2: {
      if (!spec.has(kTermDaily)) return 0.0;
      const double s = periodic_arg(tau, spec.lambda2);
      return eval_k2(tau, hp, spec) * s / (hp.l2_p2 * hp.l2_p2);
    }
    case kL2Lt: {
      if (!spec.has(kTermSe)) return 0.0;
      return eval_k3(tau, hp) * tau * tau / (2.0 * hp.l2_lt * hp.l2_lt);
    }
    case kSigma2E:
      return tau == 0.0 ? 1.0 : 0.0;
    default:
      throw std::out_of_range("eval_composite_grad: bad hyperparameter index");
  }
}

Eigen::MatrixXd kernel_matrix(const Eigen::VectorXd& times_a,
                              const Eigen::VectorXd& times_b,
                              const HyperParams& hp, const KernelSpec& spec) {
  if (times_a.size() == 0 || times_b.size() == 0)
    throw std::invalid_argument("kernel_matrix: empty input grid");
  const Eigen::Index na = times_a.size();
  const Eigen::Index nb = times_b.size();
  Eigen::MatrixXd k(na, nb);

  // Shared regular grid: fill by diagonals, one kernel evaluation per lag.
  if (na == nb && times_a.data() != nullptr && times_a == times_b &&
      is_regular_grid(times_a)) {
    const double h = na > 1 ? times_a[1] - times_a[0] : 1.0;
    Eigen::VectorXd lag(na);
    for (Eigen::Index d = 0; d < na; ++d)
      lag[d] = eval_composite(static_cast<double>(d) * h, hp, spec);
    for (Eigen::Index i = 0; i < na; ++i)
      for (Eigen::Index j = 0; j < nb; ++j) k(i, j) = lag[std::abs(i - j)];
    return k;
  }

  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index j = 0; j < nb; ++j)
      k(i, j) = eval_composite(times_a[i] - times_b[j], hp, spec);
  return k;
}

Eigen::MatrixXd kernel_matrix_grad(const Eigen::VectorXd& times,
                                   const HyperParams& hp,
                                   const KernelSpec& spec, int which,
                                   GradDomain domain) {
  if (which < 0 || which >= kNumHypers)
    throw std::out_of_range("kernel_matrix_grad: bad hyperparameter index");
  const Eigen::Index n = times.size();
  Eigen::MatrixXd g(n, n);
  if (which == kSigma2E) {
    g.setIdentity();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      g(i, i) = eval_composite_grad(0.0, hp, spec, which);
      for (Eigen::Index j = 0; j < i; ++j) {
        g(i, j) = eval_composite_grad(times[i] - times[j], hp, spec, which);
        g(j, i) = g(i, j);
      }
    }
  }
  if (domain == GradDomain::kLog) g *= hp.value(which);
  return g;
}

bool is_regular_grid(const Eigen::VectorXd& times, double rel_tol) {
  const Eigen::Index n = times.size();
  if (n <= 1) return true;
  const double h = times[1] - times[0];
  if (!(h > 0.0)) return false;
  const double tol = rel_tol * std::max(1.0, std::abs(h));
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    if (std::abs((times[i + 1] - times[i]) - h) > tol) return false;
  return true;
}

}  // namespace sgp
