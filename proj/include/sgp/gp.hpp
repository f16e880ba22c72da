// sgp/gp.hpp
//
// Exact GP regression on one data shard: the negative log marginal
// likelihood objective, its analytic gradient in the log-hyperparameter
// domain, local optimization (optionally with an ADMM proximal term), and
// posterior prediction.  Everything here is a pure function of its inputs;
// a LocalModel is immutable after construction.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>

#include "sgp/kernel.hpp"
#include "sgp/linalg.hpp"

namespace sgp {

/// One worker's slice of the series.  `times` are sample indices (hours).
struct Shard {
  Eigen::VectorXd times;
  Eigen::VectorXd values;
  bool regular_grid = false;

  Eigen::Index size() const { return times.size(); }
  // Throws std::invalid_argument on mismatched lengths, non-increasing
  // times, or fewer than two points.
  void validate() const;
};

/// Makes a shard and fills in the regular-grid flag.
Shard make_shard(Eigen::VectorXd times, Eigen::VectorXd values);

struct GpOptions {
  bool use_toeplitz = true;
  // Gradient trace term on the Toeplitz path: exact column solves at or
  // below the cutoff, seeded Hutchinson probes above it.  The probe
  // estimator has relative standard error about sqrt(2/probes) per trace;
  // probes are redrawn identically from the seed on every call, so results
  // are deterministic.  Consensus-critical shards should stay below the
  // cutoff: the sketch noise floor stalls the local line search around
  // 1e-1 gradient norms, too coarse for the ADMM residual tolerances.
  int trace_cutoff = 256;
  int hutchinson_probes = 30;
  std::uint64_t hutchinson_seed = 0x2545f4914f6cdd1dULL;
  double jitter_scale = 1e-8;  // times the mean diagonal of C(theta)
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;  // log-domain 2-norm
  bool optimize_noise = false;       // sigma2_e held fixed by default
};

/// y^T C^{-1} y + log|C| with C = K + sigma2_e*I (the n log 2pi constant is
/// dropped).  Uses the Levinson fast path on regular grids; a Toeplitz
/// breakdown falls back to the dense path.  NotPositiveDefinite propagates
/// after one jitter escalation (x10, once).
double nll(const Shard& shard, const HyperParams& hp, const KernelSpec& spec,
           const GpOptions& opts = {});

/// Gradient of nll over the seven log-domain hyperparameters:
/// component i = Tr((C^{-1} - gamma gamma^T) dC/dtheta_i) * theta_i.
Eigen::VectorXd nll_grad(const Shard& shard, const HyperParams& hp,
                         const KernelSpec& spec, const GpOptions& opts = {});

/// ADMM proximal term (log domain): zeta^T (theta - z) + rho/2 |theta - z|^2.
struct Proximal {
  Eigen::VectorXd z;
  Eigen::VectorXd zeta;
  double rho = 1.0;
};

struct FitResult {
  HyperParams hp;
  bool converged = false;  // gradient tolerance met before the cap
  bool failed = false;     // optimizer could not evaluate the objective
  int iterations = 0;
  double objective = 0.0;  // final (proximal-augmented) objective
  double nll_value = 0.0;  // final plain NLL
  double grad_norm = 0.0;
};

/// Quasi-Newton (L-BFGS, memory 8) minimization with backtracking line
/// search in the log domain.  When `prox` is present the objective is the
/// augmented Lagrangian term of Eq-(20a) form; otherwise plain NLL.
/// Optimizer failure is flagged on the result which carries the best
/// iterate seen; accepted steps never increase the objective.
FitResult fit_local(const Shard& shard, const HyperParams& init,
                    const KernelSpec& spec,
                    const std::optional<Proximal>& prox = {},
                    const GpOptions& opts = {});

struct PosteriorPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // latent-function variance, noise excluded
};

/// A trained local GP: shard, hyperparameters and the cached factorization
/// of C over the shard inputs.  Prediction cost is O(n^2) per test point
/// batch after the one-time factorization.
class LocalModel {
 public:
  LocalModel(Shard shard, HyperParams hp, KernelSpec spec,
             const GpOptions& opts = {});

  PosteriorPrediction predict(const Eigen::VectorXd& test_times) const;

  const Shard& shard() const { return shard_; }
  const HyperParams& hyperparams() const { return hp_; }
  const KernelSpec& spec() const { return spec_; }
  double prior_variance() const;  // k(0)

 private:
  Shard shard_;
  HyperParams hp_;
  KernelSpec spec_;
  double jitter_ = 0.0;
  std::shared_ptr<const SpdFactorization> chol_;
  Eigen::VectorXd alpha_;  // C^{-1} y
};

/// Half the variance of the lag-1 differenced series; cheap stand-in for an
/// external noise estimator.  Floored away from zero.
double estimate_noise_variance(const Eigen::VectorXd& values);

/// Variance-scaled starting point: the three signal variances at the data
/// variance, squared length-scales at 1, noise fixed at sigma2_e.
HyperParams default_init(const Eigen::VectorXd& values, double sigma2_e);

}  // namespace sgp
