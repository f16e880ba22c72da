// sgp/admm.hpp
//
// Consensus ADMM coordinator for scalable GP training: shards the series
// across K in-process workers, iterates local-fit / global-average /
// dual-update rounds with a barrier per round, tracks primal and dual
// residuals, and emits the consensus hyperparameters z.  Within a round the
// K local fits run concurrently; the coordinator algebra is single-threaded
// at the barrier and its summation order is fixed, so a train() call is
// bit-reproducible for a fixed partition seed.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgp/gp.hpp"

namespace sgp {

struct TooFewPoints : std::runtime_error {
  explicit TooFewPoints(const std::string& what) : std::runtime_error(what) {}
};

enum class PartitionMode { kContiguous, kStrided, kRandom };

struct AdmmConfig {
  int workers = 1;       // K
  double rho = 1.0;      // fixed augmented Lagrangian parameter
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  int max_rounds = 50;
  PartitionMode partition = PartitionMode::kContiguous;
  std::uint64_t seed = 0;  // random partition seed
  int threads = 0;         // concurrent workers per round; 0 = hardware

  void validate() const;
};

/// Splits the series into K shards: disjoint, sizes differing by at most
/// one, union the full set.  Contiguous mode preserves regular grids.
/// Throws TooFewPoints when N < 2K.
std::vector<Shard> partition(const Eigen::VectorXd& times,
                             const Eigen::VectorXd& values,
                             const AdmmConfig& cfg);

/// Everything recorded about one completed round; enough to recompute the
/// coordinator algebra exactly in tests.
struct RoundRecord {
  int round = 0;
  Eigen::MatrixXd theta;        // K x p, log domain
  Eigen::VectorXd z;            // p
  Eigen::VectorXd z_prev;       // p
  Eigen::MatrixXd zeta;         // K x p (after the round's dual update)
  Eigen::MatrixXd zeta_prev;    // K x p (before the round)
  Eigen::VectorXd primal_norms; // per-worker |theta_i - z|
  double dual_norm = 0.0;       // |rho (z - z_prev)|
  double eps_pri = 0.0;
  double eps_dual = 0.0;
  Eigen::VectorXd nll;          // per-worker plain NLL at theta_i
  std::vector<int> inner_iterations;
  std::vector<bool> fit_converged;
  std::vector<bool> fit_failed;
};

struct AdmmState {
  int round = 0;
  Eigen::MatrixXd theta;  // K x p
  Eigen::VectorXd z;      // p
  Eigen::MatrixXd zeta;   // K x p
  Eigen::VectorXd z_prev;
  std::vector<RoundRecord> history;
  long long rounds_completed = 0;
  long long scalars_exchanged = 0;  // rounds * (2*dim(theta) + 1)
};

/// State per Algorithm-1 line 1: theta_i = theta0, zeta_i = 0,
/// z = (1/K) sum_i (theta_i + zeta_i / rho).
AdmmState init_state(int workers, const Eigen::VectorXd& theta0_log,
                     double rho);

/// One full round: K proximal local fits (warm-started at theta_i^r), the
/// z-average, the dual update, then residuals.  A worker whose optimizer
/// fails contributes its best iterate and the round proceeds.
void run_round(AdmmState& state, const std::vector<Shard>& shards,
               const KernelSpec& spec, const AdmmConfig& cfg,
               const GpOptions& gp_opts);

enum class StopStatus { kContinue, kConverged, kCapped };

// Feasibility tolerances:
//   eps_pri  = sqrt(p) eps_abs + eps_rel max{ max_i |theta_i|, |z| }
//   eps_dual = sqrt(p) eps_abs + eps_rel |rho zeta|   (duals stacked)
double eps_primal(const AdmmState& state, const AdmmConfig& cfg);
double eps_dual(const AdmmState& state, const AdmmConfig& cfg);

/// Converged iff max_i |Delta_{i,p}| <= eps_pri and |Delta_d| <= eps_dual.
StopStatus check_stop(const AdmmState& state, const AdmmConfig& cfg);

struct TrainResult {
  HyperParams z;
  AdmmState state;
  StopStatus status = StopStatus::kContinue;
  std::vector<Shard> shards;
  double sigma2_e = 0.0;
};

/// Algorithm 1 end to end.  A capped run surfaces kCapped without failing.
/// When `init` is absent the start point is default_init() with the noise
/// variance estimated once from the full series.
TrainResult train(const Eigen::VectorXd& times, const Eigen::VectorXd& values,
                  const AdmmConfig& cfg, const KernelSpec& spec,
                  const GpOptions& gp_opts = {},
                  const std::optional<HyperParams>& init = {});

/// Round-by-round trace in a columnar text format:
/// round, per-worker primal norms, dual norm, eps_pri, eps_dual,
/// per-worker NLL.
std::string format_trace(const AdmmState& state);

}  // namespace sgp
