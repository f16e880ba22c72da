// sgp/fusion.hpp
//
// Generalized product-of-experts fusion of K local posterior predictions,
// with simplex-constrained weights beta obtained from a single-point QP, a
// multi-point mirror descent (KL geometry, so the projection is a
// renormalization), a soft-max heuristic on validation errors, or the
// entropy-difference comparison strategy.  Also the validation split and
// the concatenating scheme.

#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "sgp/gp.hpp"

namespace sgp {

/// Per-expert means/variances at a set of points (experts x points).
/// Variances below 1e-12 are clamped on construction and flagged.
struct LocalPredictionSet {
  Eigen::MatrixXd mean;      // K x M
  Eigen::MatrixXd variance;  // K x M
  bool clamped = false;

  static LocalPredictionSet make(Eigen::MatrixXd mean,
                                 Eigen::MatrixXd variance);
  int experts() const { return static_cast<int>(mean.rows()); }
  int points() const { return static_cast<int>(mean.cols()); }
  double a(int i, int m) const { return mean(i, m) / variance(i, m); }
  double b(int i, int m) const { return 1.0 / variance(i, m); }
  LocalPredictionSet column(int m) const;  // single-point view (copy)
};

/// Weights on the probability simplex.
struct FusionWeights {
  Eigen::VectorXd beta;
  // Throws std::invalid_argument unless beta >= 0 and sums to 1 (1e-9).
  void validate() const;
};

FusionWeights uniform_weights(int k);

/// Fused posterior per point under the generalized PoE:
///   var* = (sum_i beta_i / var_i)^{-1},  mu* = var* sum_i beta_i mu_i / var_i.
struct FusedPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd beta;             // K x M (columns may differ per point)
  Eigen::MatrixXd expert_mean;      // K x M, retained inputs
  Eigen::MatrixXd expert_variance;  // K x M
  std::vector<std::string> warnings;
  std::vector<int> expert_ids;      // surviving experts (original indices)
};

FusedPrediction fuse(const LocalPredictionSet& locals,
                     const FusionWeights& weights);

/// Prediction-residual objective f(beta) of the weight optimization and its
/// analytic gradient (quotient rule).
double fusion_objective(const LocalPredictionSet& locals,
                        const Eigen::VectorXd& truths,
                        const Eigen::VectorXd& beta);
Eigen::VectorXd fusion_gradient(const LocalPredictionSet& locals,
                                const Eigen::VectorXd& truths,
                                const Eigen::VectorXd& beta);

/// Single-validation-point weight optimization: the QP in r-space
///   min (y - a^T r)^2  s.t.  b^T r = 1, r >= 0,
/// solved by projected gradient plus an exact polish on the active support,
/// mapped back by beta_i = r_i / sum r.  Among the optima found, the most
/// uniform beta (max entropy) is returned.
FusionWeights solve_qp_single(const LocalPredictionSet& at_point,
                              double truth);

struct MirrorOptions {
  int iterations = 500;
  // 0 = constant step (R/G) sqrt(2/T) with R = sqrt(log K) for the uniform
  // start and G the max gradient norm over the first 10 iterates.
  double step = 0.0;
  double step_clip = 50.0;  // bound on |eta * g_i| before exponentiation
};

struct MirrorTrace {
  std::vector<double> objective;  // f(beta^r) per iterate
  double step_used = 0.0;
  double max_grad_norm = 0.0;     // over all iterates
  double best_objective = 0.0;
};

/// One exponentiated-gradient update: beta_i exp(-eta g_i), renormalized.
Eigen::VectorXd mirror_step(const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& grad, double eta);

/// Mirror descent over M validation points; returns the best iterate seen.
/// Every iterate lies exactly on the simplex.
FusionWeights mirror_descent(const LocalPredictionSet& validation,
                             const Eigen::VectorXd& truths,
                             const MirrorOptions& opts = {},
                             MirrorTrace* trace = nullptr);

/// beta_k = exp(-e_k) / sum exp(-e_k), computed with max subtraction.
FusionWeights softmax_weights(const Eigen::VectorXd& errors);

struct Series {
  Eigen::VectorXd times;
  Eigen::VectorXd values;
  Eigen::Index size() const { return times.size(); }
};

/// Validation set = the last M points of the training series (the points
/// closest to the test block); the remainder is the fit part.
std::pair<Series, Series> split_validation(const Series& training,
                                           int validation_points);

enum class FusionStrategy { kQp, kMirror, kSoftmax, kEntropy };

std::string to_string(FusionStrategy s);

struct FusionOptions {
  FusionStrategy strategy = FusionStrategy::kQp;
  bool concatenate = false;
  MirrorOptions mirror;
  GpOptions gp;
};

/// Full prediction phase: each expert (one per shard, all at the consensus
/// hyperparameters) predicts the validation and test points; weights come
/// from the chosen strategy on the validation set; the fused test
/// prediction uses those weights.  With `concatenate` set, expert test
/// posteriors are recomputed with the validation points appended to each
/// shard before fusing with the already-fixed weights.  Experts whose
/// model construction or prediction fails are dropped and the weights are
/// renormalized over the survivors (logged in `warnings`).
FusedPrediction predict_fused(const HyperParams& z,
                              const std::vector<Shard>& shards,
                              const Series& validation,
                              const Eigen::VectorXd& test_times,
                              const KernelSpec& spec,
                              const FusionOptions& opts);

}  // namespace sgp
