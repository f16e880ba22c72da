// sgp/kernel.hpp
//
// Composite stationary kernel for hourly traffic series: a weekly periodic
// term, a daily periodic term and a squared-exponential term, plus the
// analytic derivatives of C(theta) = K(theta_h) + sigma2_e*I with respect to
// each hyperparameter.  All evaluators are pure functions; values are
// immutable after construction and safe to share across threads.

#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sgp {

// Index order of the hyperparameter vector
// [sigma2_p1, sigma2_p2, sigma2_lt, l2_p1, l2_p2, l2_lt, sigma2_e].
enum HyperIndex : int {
  kSigma2P1 = 0,
  kSigma2P2 = 1,
  kSigma2Lt = 2,
  kL2P1 = 3,
  kL2P2 = 4,
  kL2Lt = 5,
  kSigma2E = 6,
};
inline constexpr int kNumHypers = 7;

/// Kernel hyperparameters plus the noise variance, stored in the raw
/// (positive) domain.  Optimizers work on the log-domain view so that
/// positivity needs no explicit constraint.
struct HyperParams {
  double sigma2_p1 = 1.0;  // weekly periodic variance
  double sigma2_p2 = 1.0;  // daily periodic variance
  double sigma2_lt = 1.0;  // squared-exponential variance
  double l2_p1 = 1.0;      // squared length-scale inside the weekly exponent
  double l2_p2 = 1.0;      // squared length-scale inside the daily exponent
  double l2_lt = 1.0;      // squared length-scale of the SE term (hours^2)
  double sigma2_e = 1.0;   // observation noise variance

  double value(int index) const;
  void set_value(int index, double v);

  Eigen::VectorXd log_vector() const;
  static HyperParams from_log_vector(const Eigen::VectorXd& v);

  // Throws std::invalid_argument unless all seven values are finite and > 0.
  void validate() const;
};

enum KernelTerm : unsigned {
  kTermWeekly = 1u << 0,
  kTermDaily = 1u << 1,
  kTermSe = 1u << 2,
  kTermAll = kTermWeekly | kTermDaily | kTermSe,
};

/// Which elementary kernels are active and their periodic lengths, expressed
/// in samples (hourly data: 168 = one week, 24 = one day).
struct KernelSpec {
  double lambda1 = 168.0;
  double lambda2 = 24.0;
  unsigned active_terms = kTermAll;

  bool has(KernelTerm t) const { return (active_terms & t) != 0; }
  // Throws std::invalid_argument unless lambda1 > lambda2 > 0 and at least
  // one term is active.
  void validate() const;
};

// Domain of a kernel-matrix derivative: raw parameter, or log-domain
// (raw derivative scaled by the parameter value, chain rule).
enum class GradDomain { kRaw, kLog };

// Elementary kernels, Eq.-level building blocks.  Symmetric in the sign of
// tau; the periodic terms reduce the phase with fmod so that shifting tau by
// a whole period reproduces the value exactly.
double eval_k1(double tau, const HyperParams& hp, const KernelSpec& spec);
double eval_k2(double tau, const HyperParams& hp, const KernelSpec& spec);
double eval_k3(double tau, const HyperParams& hp);

/// Sum of the active terms at lag tau.
double eval_composite(double tau, const HyperParams& hp,
                      const KernelSpec& spec);

/// Derivative of the composite kernel (plus noise) at lag tau with respect
/// to hyperparameter `which`, in the raw domain.  Inactive terms contribute
/// zero; `which == kSigma2E` contributes 1 at tau == 0 and 0 elsewhere.
double eval_composite_grad(double tau, const HyperParams& hp,
                           const KernelSpec& spec, int which);

/// Cross-kernel matrix: element (i, j) = k(times_a[i] - times_b[j]).
Eigen::MatrixXd kernel_matrix(const Eigen::VectorXd& times_a,
                              const Eigen::VectorXd& times_b,
                              const HyperParams& hp, const KernelSpec& spec);

/// Elementwise derivative of C(theta) = K + sigma2_e*I over a single input
/// grid.  Throws std::out_of_range for an invalid index.
Eigen::MatrixXd kernel_matrix_grad(const Eigen::VectorXd& times,
                                   const HyperParams& hp,
                                   const KernelSpec& spec, int which,
                                   GradDomain domain = GradDomain::kRaw);

/// True when `times` is a regularly spaced increasing grid (enables the
/// Toeplitz fast path).
bool is_regular_grid(const Eigen::VectorXd& times, double rel_tol = 1e-9);

}  // namespace sgp
