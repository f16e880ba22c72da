// sgp/linalg.hpp
//
// Dense SPD factorizations plus the Toeplitz fast path (Levinson recursion)
// that brings per-worker training from O(n^3) down to O(n^2) on regular
// grids.  Factorizations are immutable after construction; independent
// solves may run concurrently.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <stdexcept>

namespace sgp {

struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what)
      : std::runtime_error(what) {}
};

// A vanishing prediction-error variance in the Levinson recursion; callers
// fall back to the dense path.
struct ToeplitzBreakdown : std::runtime_error {
  explicit ToeplitzBreakdown(const std::string& what)
      : std::runtime_error(what) {}
};

/// Cholesky factorization of a symmetric positive definite matrix,
/// backed by Eigen's LLT.
class SpdFactorization {
 public:
  explicit SpdFactorization(const Eigen::MatrixXd& c);

  Eigen::Index size() const { return llt_.matrixLLT().rows(); }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  Eigen::MatrixXd inverse() const;
  double log_det() const;
  /// L with L*L^T = C.
  Eigen::MatrixXd matrix_l() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Symmetric positive definite Toeplitz matrix represented by its first
/// column.  solve() runs the Levinson recursion in O(n^2); log_det() reuses
/// the recursion's prediction-error variances.  The reflection coefficients
/// are cached after the first solve or log-determinant.
class ToeplitzOperator {
 public:
  explicit ToeplitzOperator(Eigen::VectorXd first_column);

  Eigen::Index size() const { return col_.size(); }
  const Eigen::VectorXd& first_column() const { return col_; }

  /// Solves T x = b.  Throws ToeplitzBreakdown when a prediction-error
  /// variance of the normalized recursion falls below 1e-12.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// log|T| from the prediction-error variances.
  double log_det() const;

  /// y = T x in O(n^2) without materializing T.
  Eigen::VectorXd matvec(const Eigen::VectorXd& x) const;

  /// Materializes the full matrix (tests and dense fallback).
  Eigen::MatrixXd dense() const;

 private:
  void factorize() const;  // Durbin pass: reflection coeffs + error variances

  Eigen::VectorXd col_;
  mutable bool factored_ = false;
  mutable Eigen::VectorXd reflection_;  // kappa_1 .. kappa_{n-1}
  mutable Eigen::VectorXd pred_error_;  // E_1 .. E_{n-1}, E_0 = 1 implicit
};

}  // namespace sgp
