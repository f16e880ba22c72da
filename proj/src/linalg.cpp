#include "sgp/linalg.hpp"

#include <cmath>

namespace sgp {

namespace {
// Normalized prediction-error variances below this abort the recursion.
constexpr double kBreakdownTol = 1e-12;
}  // namespace

SpdFactorization::SpdFactorization(const Eigen::MatrixXd& c) : llt_(c) {
  if (llt_.info() != Eigen::Success)
    throw NotPositiveDefinite("spd_factor: matrix is not positive definite");
}

Eigen::VectorXd SpdFactorization::solve(const Eigen::VectorXd& b) const {
  return llt_.solve(b);
}

Eigen::MatrixXd SpdFactorization::solve(const Eigen::MatrixXd& b) const {
  return llt_.solve(b);
}

Eigen::MatrixXd SpdFactorization::inverse() const {
  return llt_.solve(
      Eigen::MatrixXd::Identity(llt_.rows(), llt_.cols()));
}

double SpdFactorization::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

ToeplitzOperator::ToeplitzOperator(Eigen::VectorXd first_column)
    : col_(std::move(first_column)) {
  if (col_.size() == 0)
    throw std::invalid_argument("ToeplitzOperator: empty first column");
}

// Durbin pass on the t0-normalized matrix: computes the reflection
// coefficients kappa_m and prediction-error variances E_m with
// E_m = E_{m-1} (1 - kappa_m^2), E_0 = 1.
void ToeplitzOperator::factorize() const {
  if (factored_) return;
  const Eigen::Index n = col_.size();
  const double t0 = col_[0];
  if (!(t0 > 0.0))
    throw ToeplitzBreakdown("toeplitz: nonpositive leading entry");
  reflection_.resize(std::max<Eigen::Index>(n - 1, 0));
  pred_error_.resize(std::max<Eigen::Index>(n - 1, 0));
  if (n > 1) {
    const Eigen::VectorXd rhat = col_ / t0;
    Eigen::VectorXd y(n - 1);
    double kappa = -rhat[1];
    y[0] = kappa;
    reflection_[0] = kappa;
    double err = 1.0 - kappa * kappa;
    pred_error_[0] = err;
    if (err < kBreakdownTol)
      throw ToeplitzBreakdown("toeplitz: prediction-error variance vanished");
    for (Eigen::Index m = 1; m + 1 < n; ++m) {
      double s = rhat[m + 1];
      for (Eigen::Index j = 0; j < m; ++j) s += rhat[j + 1] * y[m - 1 - j];
      kappa = -s / err;
      reflection_[m] = kappa;
      for (Eigen::Index j = 0, i2 = m - 1; j <= i2; ++j, --i2) {
        if (j == i2) {
          y[j] += kappa * y[j];
        } else {
          const double lo = y[j], hi = y[i2];
          y[j] = lo + kappa * hi;
          y[i2] = hi + kappa * lo;
        }
      }
      y[m] = kappa;
      err *= 1.0 - kappa * kappa;
      pred_error_[m] = err;
      if (err < kBreakdownTol)
        throw ToeplitzBreakdown("toeplitz: prediction-error variance vanished");
    }
  }
  factored_ = true;
}

Eigen::VectorXd ToeplitzOperator::solve(const Eigen::VectorXd& b) const {
  const Eigen::Index n = col_.size();
  if (b.size() != n)
    throw std::invalid_argument("toeplitz solve: size mismatch");
  factorize();
  const double t0 = col_[0];
  const Eigen::VectorXd rhat = col_ / t0;
  const Eigen::VectorXd bhat = b / t0;

  Eigen::VectorXd x(n);
  x[0] = bhat[0];
  if (n == 1) return x;

  // Regenerate the Durbin vector from the cached reflection coefficients
  // while folding in the right-hand side (Levinson).
  Eigen::VectorXd y(n - 1);
  y[0] = reflection_[0];
  for (Eigen::Index k = 1; k < n; ++k) {
    double s = bhat[k];
    for (Eigen::Index j = 0; j < k; ++j) s -= rhat[j + 1] * x[k - 1 - j];
    const double mu = s / pred_error_[k - 1];
    for (Eigen::Index j = 0; j < k; ++j) x[j] += mu * y[k - 1 - j];
    x[k] = mu;
    if (k + 1 < n) {
      const double kappa = reflection_[k];
      for (Eigen::Index j = 0, i2 = k - 1; j <= i2; ++j, --i2) {
        if (j == i2) {
          y[j] += kappa * y[j];
        } else {
          const double lo = y[j], hi = y[i2];
          y[j] = lo + kappa * hi;
          y[i2] = hi + kappa * lo;
        }
      }
      y[k] = kappa;
    }
  }
  return x;
}

double ToeplitzOperator::log_det() const {
  factorize();
  const Eigen::Index n = col_.size();
  double ld = static_cast<double>(n) * std::log(col_[0]);
  for (Eigen::Index m = 0; m + 1 < n; ++m) ld += std::log(pred_error_[m]);
  return ld;
}

Eigen::VectorXd ToeplitzOperator::matvec(const Eigen::VectorXd& x) const {
  const Eigen::Index n = col_.size();
  if (x.size() != n)
    throw std::invalid_argument("toeplitz matvec: size mismatch");
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // row i = (col[i], ..., col[1], col[0], col[1], ..., col[n-1-i])
    double acc = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) acc += col_[i - j] * x[j];
    for (Eigen::Index j = i + 1; j < n; ++j) acc += col_[j - i] * x[j];
    out[i] = acc;
  }
  return out;
}

Eigen::MatrixXd ToeplitzOperator::dense() const {
  const Eigen::Index n = col_.size();
  Eigen::MatrixXd t(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) t(i, j) = col_[std::abs(i - j)];
  return t;
}

}  // namespace sgp
