#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "sgp/kernel.hpp"

using namespace sgp;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Straight transcriptions of the kernel formulas, independent of the
// library implementation.
double ref_k1(double tau, double s2, double l2, double lambda) {
  const double s = std::sin(kPi * tau / lambda);
  return s2 * std::exp(-s * s / l2);
}
double ref_k3(double tau, double s2, double l2) {
  return s2 * std::exp(-tau * tau / (2.0 * l2));
}

HyperParams unit_hypers() {
  HyperParams hp;
  hp.sigma2_p1 = hp.sigma2_p2 = hp.sigma2_lt = 1.0;
  hp.l2_p1 = hp.l2_p2 = hp.l2_lt = 1.0;
  hp.sigma2_e = 1.0;
  return hp;
}

}  // namespace

TEST_CASE("elementary kernel values") {
  KernelSpec spec;
  HyperParams hp = unit_hypers();

  hp.sigma2_p1 = 2.0;
  CHECK(eval_k1(0.0, hp, spec) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eval_k1(spec.lambda1, hp, spec) == doctest::Approx(2.0).epsilon(1e-15));
  hp.sigma2_p1 = 1.0;
  hp.l2_p1 = 1.0;
  CHECK(eval_k1(spec.lambda1 / 2.0, hp, spec) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  hp.sigma2_p2 = 3.0;
  CHECK(eval_k2(0.0, hp, spec) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(eval_k2(2.0 * spec.lambda2, hp, spec) ==
        doctest::Approx(3.0).epsilon(1e-15));
  hp.sigma2_p2 = 1.0;
  hp.l2_p2 = 4.0;
  CHECK(eval_k2(spec.lambda2 / 2.0, hp, spec) ==
        doctest::Approx(std::exp(-0.25)).epsilon(1e-12));

  hp.sigma2_lt = 5.0;
  CHECK(eval_k3(0.0, hp) == doctest::Approx(5.0).epsilon(1e-15));
  hp.sigma2_lt = 2.0;
  hp.l2_lt = 1.0;
  CHECK(eval_k3(2.0, hp) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-12));
  // monotone decay toward zero
  double prev = eval_k3(0.0, hp);
  for (double tau = 1.0; tau < 40.0; tau += 1.0) {
    const double v = eval_k3(tau, hp);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(eval_k3(1e3, hp) == doctest::Approx(0.0).epsilon(1e-300));
}

TEST_CASE("composite kernel sums the active terms") {
  KernelSpec spec;
  HyperParams hp = unit_hypers();
  CHECK(eval_composite(0.0, hp, spec) == doctest::Approx(3.0).epsilon(1e-15));

  KernelSpec se_only = spec;
  se_only.active_terms = kTermSe;
  for (double tau : {0.0, 0.7, 5.0, -3.2})
    CHECK(eval_composite(tau, hp, se_only) == eval_k3(tau, hp));

  // termwise oracle at tau = 1 straight from the formulas
  const double expect = ref_k1(1.0, 1.0, 1.0, 168.0) +
                        ref_k1(1.0, 1.0, 1.0, 24.0) + ref_k3(1.0, 1.0, 1.0);
  CHECK(eval_composite(1.0, hp, spec) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kernel symmetry, bound and exact periodicity") {
  KernelSpec spec;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    HyperParams hp;
    hp.sigma2_p1 = unif(rng);
    hp.sigma2_p2 = unif(rng);
    hp.sigma2_lt = unif(rng);
    hp.l2_p1 = unif(rng);
    hp.l2_p2 = unif(rng);
    hp.l2_lt = unif(rng);
    hp.sigma2_e = unif(rng);
    std::uniform_real_distribution<double> taud(-400.0, 400.0);
    const double tau = taud(rng);
    CHECK(eval_composite(tau, hp, spec) == eval_composite(-tau, hp, spec));
    CHECK(eval_composite(tau, hp, spec) > 0.0);
    CHECK(eval_composite(tau, hp, spec) <=
          hp.sigma2_p1 + hp.sigma2_p2 + hp.sigma2_lt + 1e-15);
    // integer lags shift by a whole period bitwise
    const double itau = std::floor(tau);
    CHECK(eval_k1(itau + spec.lambda1, hp, spec) == eval_k1(itau, hp, spec));
    CHECK(eval_k2(itau + spec.lambda2, hp, spec) == eval_k2(itau, hp, spec));
  }
}

TEST_CASE("hyperparameter log view round-trips") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-6.0, 6.0);
  for (int trial = 0; trial < 50; ++trial) {
    HyperParams hp;
    for (int i = 0; i < kNumHypers; ++i) hp.set_value(i, std::exp(unif(rng)));
    const HyperParams back = HyperParams::from_log_vector(hp.log_vector());
    for (int i = 0; i < kNumHypers; ++i)
      CHECK(back.value(i) == doctest::Approx(hp.value(i)).epsilon(1e-14));
  }
  HyperParams bad = unit_hypers();
  bad.l2_p2 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("kernel spec validation") {
  KernelSpec ok;
  CHECK_NOTHROW(ok.validate());
  KernelSpec swapped{24.0, 168.0, kTermAll};
  CHECK_THROWS_AS(swapped.validate(), std::invalid_argument);
  KernelSpec empty{168.0, 24.0, 0};
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("kernel matrix against the elementwise loop") {
  KernelSpec spec;
  HyperParams hp = unit_hypers();
  hp.sigma2_p1 = 1.3;
  hp.l2_lt = 9.0;

  const Eigen::VectorXd single = Eigen::VectorXd::Zero(1);
  const Eigen::MatrixXd one = kernel_matrix(single, single, hp, spec);
  CHECK(one(0, 0) == eval_composite(0.0, hp, spec));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 50.0);
  Eigen::VectorXd ta(5), tb(4);
  for (int i = 0; i < 5; ++i) ta[i] = unif(rng);
  for (int i = 0; i < 4; ++i) tb[i] = unif(rng);
  const Eigen::MatrixXd k = kernel_matrix(ta, tb, hp, spec);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(k(i, j) == doctest::Approx(eval_composite(ta[i] - tb[j], hp, spec))
                           .epsilon(1e-14));
}

TEST_CASE("regular grids give an exactly Toeplitz matrix") {
  KernelSpec spec;
  HyperParams hp = unit_hypers();
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(30, 0.0, 29.0);
  const Eigen::MatrixXd k = kernel_matrix(t, t, hp, spec);
  for (int i = 0; i + 1 < 30; ++i)
    for (int j = 0; j + 1 < 30; ++j) CHECK(k(i, j) == k(i + 1, j + 1));
  CHECK(k == k.transpose());
}

TEST_CASE("kernel matrices are positive semidefinite with noise") {
  KernelSpec spec;
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 46);
    Eigen::VectorXd t(n);
    double pos = 0.0;
    for (int i = 0; i < n; ++i) {
      pos += unif(rng);
      t[i] = pos;
    }
    HyperParams hp;
    hp.sigma2_p1 = unif(rng);
    hp.sigma2_p2 = unif(rng);
    hp.sigma2_lt = unif(rng);
    hp.l2_p1 = unif(rng);
    hp.l2_p2 = unif(rng);
    hp.l2_lt = unif(rng) * 10.0;
    hp.sigma2_e = 0.1;
    Eigen::MatrixXd c = kernel_matrix(t, t, hp, spec);
    c.diagonal().array() += hp.sigma2_e;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * c.trace());
  }
}

TEST_CASE("kernel matrix gradients") {
  KernelSpec spec;
  HyperParams hp = unit_hypers();
  hp.sigma2_lt = 2.0;
  hp.l2_lt = 3.0;
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(6, 0.0, 5.0);

  SUBCASE("noise derivative is the identity") {
    CHECK(kernel_matrix_grad(t, hp, spec, kSigma2E) ==
          Eigen::MatrixXd::Identity(6, 6));
  }

  SUBCASE("se variance derivative is the unit-variance kernel") {
    const Eigen::MatrixXd g = kernel_matrix_grad(t, hp, spec, kSigma2Lt);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double tau = t[i] - t[j];
        CHECK(g(i, j) == doctest::Approx(std::exp(-tau * tau / (2.0 * hp.l2_lt)))
                             .epsilon(1e-14));
      }
  }

  SUBCASE("log-domain derivative is the raw one scaled by the parameter") {
    const Eigen::MatrixXd raw = kernel_matrix_grad(t, hp, spec, kL2Lt);
    const Eigen::MatrixXd logd =
        kernel_matrix_grad(t, hp, spec, kL2Lt, GradDomain::kLog);
    CHECK((logd - hp.l2_lt * raw).cwiseAbs().maxCoeff() <= 1e-14);
  }

  SUBCASE("invalid index throws") {
    CHECK_THROWS_AS(kernel_matrix_grad(t, hp, spec, 7), std::out_of_range);
    CHECK_THROWS_AS(kernel_matrix_grad(t, hp, spec, -1), std::out_of_range);
  }
}

TEST_CASE("every matrix gradient matches central finite differences") {
  KernelSpec spec;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0.3, 2.5);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 6;
    Eigen::VectorXd t(n);
    double pos = 0.0;
    for (int i = 0; i < n; ++i) {
      pos += unif(rng);
      t[i] = pos;
    }
    HyperParams hp;
    for (int i = 0; i < kNumHypers; ++i) hp.set_value(i, unif(rng));
    const Eigen::VectorXd x = hp.log_vector();
    for (int p = 0; p < kNumHypers; ++p) {
      const Eigen::MatrixXd g =
          kernel_matrix_grad(t, hp, spec, p, GradDomain::kLog);
      Eigen::VectorXd xp = x, xm = x;
      const double h = 1e-6;
      xp[p] += h;
      xm[p] -= h;
      const HyperParams hpp = HyperParams::from_log_vector(xp);
      const HyperParams hpm = HyperParams::from_log_vector(xm);
      auto cov = [&](const HyperParams& q) {
        Eigen::MatrixXd c = kernel_matrix(t, t, q, spec);
        c.diagonal().array() += q.sigma2_e;
        return c;
      };
      const Eigen::MatrixXd fd = (cov(hpp) - cov(hpm)) / (2.0 * h);
      const double scale = std::max(1e-8, fd.cwiseAbs().maxCoeff());
      CHECK((g - fd).cwiseAbs().maxCoeff() / scale <= 1e-4);
    }
  }
}
