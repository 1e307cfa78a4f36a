#include "shadowmnar/errors.hpp"
#include "shadowmnar/estimators.hpp"
#include "shadowmnar/solver.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace shadow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct LogisticData {
  Eigen::MatrixXd X;
  Eigen::VectorXd r;
};

LogisticData logistic_data(long n, double a0, double a1, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u;
  LogisticData d{Eigen::MatrixXd(n, 2), Eigen::VectorXd(n)};
  for (long i = 0; i < n; ++i) {
    const double x = nd(rng);
    d.X(i, 0) = 1.0;
    d.X(i, 1) = x;
    d.r[i] = u(rng) < oracle::expit(a0 + a1 * x) ? 1.0 : 0.0;
  }
  return d;
}

MomentSystem logistic_score(const LogisticData& d, double scale = 1.0) {
  MomentSystem sys;
  sys.param_dim = 2;
  sys.moment_dim = 2;
  sys.records = d.X.rows();
  sys.eval = [&d, scale](Eigen::Index i, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) {
    const double p = oracle::expit(d.X.row(i).dot(th));
    out = scale * (d.r[i] - p) * d.X.row(i).transpose();
  };
  return sys;
}

}  // namespace

TEST_CASE("linear root") {
  MomentSystem sys;
  sys.param_dim = 1;
  sys.moment_dim = 1;
  sys.records = 10;
  sys.eval = [](Eigen::Index, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) { out[0] = 2.0 * th[0] - 4.0; };
  const auto rep = solve_moments(sys, Eigen::VectorXd::Constant(1, 17.0));
  REQUIRE(rep.converged);
  CHECK_THAT(rep.theta_hat[0], WithinAbs(2.0, 1e-8));
  CHECK(rep.final_residual_norm <= 1e-8);
}

TEST_CASE("logistic score root equals maximum likelihood") {
  const auto d = logistic_data(100000, 0.8, 0.5, 5);
  const auto sys = logistic_score(d);
  const auto rep = solve_moments(sys, Eigen::VectorXd::Zero(2));
  REQUIRE(rep.converged);
  const Eigen::VectorXd ml = oracle::logistic_irls(d.X, d.r);
  CHECK_THAT(rep.theta_hat[0], WithinAbs(ml[0], 1e-6));
  CHECK_THAT(rep.theta_hat[1], WithinAbs(ml[1], 1e-6));
  CHECK_THAT(rep.theta_hat[0], WithinAbs(0.8, 0.03));
  CHECK_THAT(rep.theta_hat[1], WithinAbs(0.5, 0.03));

  const auto via_fit = fit_logistic(d.X, d.r);
  CHECK_THAT(via_fit.theta_hat[1], WithinAbs(ml[1], 1e-6));
}

TEST_CASE("root is invariant to scaling the moments") {
  const auto d = logistic_data(3000, 0.3, -0.7, 9);
  const auto a = solve_moments(logistic_score(d), Eigen::VectorXd::Zero(2));
  const auto b = solve_moments(logistic_score(d, 37.5), Eigen::VectorXd::Zero(2));
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK((a.theta_hat - b.theta_hat).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("numerical Jacobian matches the analytic derivative") {
  const auto d = logistic_data(500, 0.3, 0.4, 13);
  const auto sys = logistic_score(d);
  const Eigen::Vector2d th(0.2, -0.1);
  // d/dtheta mean (r - p) X = -mean p (1 - p) X X'
  Eigen::Matrix2d exact = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double p = oracle::expit(d.X.row(i).dot(th));
    exact -= p * (1 - p) * d.X.row(i).transpose() * d.X.row(i);
  }
  exact /= static_cast<double>(d.X.rows());
  const Eigen::MatrixXd num = numerical_jacobian(sys, th);
  CHECK((num - exact).norm() <= 1e-6 * exact.norm());
}

TEST_CASE("over-identified GMM attains the smallest objective near the truth") {
  // E[x - theta1] = 0, E[x^2 - theta1^2 - theta2] = 0, E[(x-theta1)^3] = 0 for x ~ N(1, 2).
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(1.0, std::sqrt(2.0));
  const long n = 20000;
  Eigen::VectorXd xs(n);
  for (long i = 0; i < n; ++i) xs[i] = nd(rng);
  MomentSystem sys;
  sys.param_dim = 2;
  sys.moment_dim = 3;
  sys.records = n;
  sys.eval = [&xs](Eigen::Index i, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) {
    const double x = xs[i];
    out << x - th[0], x * x - th[0] * th[0] - th[1], std::pow(x - th[0], 3);
  };
  const auto rep = solve_moments(sys, Eigen::Vector2d(0.0, 1.0));
  REQUIRE(rep.converged);
  REQUIRE(rep.weight.rows() == 3);
  auto objective = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd g = mean_residuals(sys, th);
    return g.dot(rep.weight * g);
  };
  CHECK(rep.objective <= objective(Eigen::Vector2d(1.0, 2.0)) + 1e-6);
  // Oracle: grid scan in a neighbourhood of the truth.
  double best = std::numeric_limits<double>::infinity();
  for (double a = 0.9; a <= 1.1; a += 0.002) {
    for (double b = 1.9; b <= 2.1; b += 0.002) best = std::min(best, objective(Eigen::Vector2d(a, b)));
  }
  CHECK(rep.objective <= best + 1e-6);
  CHECK_THAT(rep.theta_hat[0], WithinAbs(1.0, 0.05));
  CHECK_THAT(rep.theta_hat[1], WithinAbs(2.0, 0.1));
}

TEST_CASE("singular Jacobian raises with the condition number") {
  MomentSystem sys;
  sys.param_dim = 2;
  sys.moment_dim = 2;
  sys.records = 5;
  sys.eval = [](Eigen::Index, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) {
    out << th[0] + th[1] - 1.0, 2.0 * (th[0] + th[1]) - 3.0;
  };
  try {
    solve_moments(sys, Eigen::Vector2d(0.0, 0.0));
    FAIL("expected SingularJacobianError");
  } catch (const SingularJacobianError& e) {
    CHECK(e.condition() > 1e12);
  }
}

TEST_CASE("non-convergence is reported, never silent") {
  // cosh(theta) + 0.1 theta stays above 0.99 and has no root.
  MomentSystem sys;
  sys.param_dim = 1;
  sys.moment_dim = 1;
  sys.records = 3;
  sys.eval = [](Eigen::Index, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = std::cosh(th[0]) + 0.1 * th[0];
  };
  SolverOptions opt;
  opt.max_iterations = 20;
  const auto rep = solve_moments(sys, Eigen::VectorXd::Constant(1, 2.0), opt);
  CHECK_FALSE(rep.converged);
  CHECK(rep.final_residual_norm > 1e-8);
}

TEST_CASE("sandwich of the sample mean is the variance over n") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(3.0, 2.0);
  const long n = 400;
  Eigen::VectorXd ys(n);
  for (long i = 0; i < n; ++i) ys[i] = nd(rng);
  MomentSystem sys;
  sys.param_dim = 1;
  sys.moment_dim = 1;
  sys.records = n;
  sys.eval = [&ys](Eigen::Index i, const Eigen::VectorXd& th, Eigen::Ref<Eigen::VectorXd> out) { out[0] = ys[i] - th[0]; };
  const auto rep = solve_moments(sys, Eigen::VectorXd::Zero(1));
  REQUIRE(rep.converged);
  const double mean = ys.mean();
  const double var = (ys.array() - mean).square().sum() / n;  // 1/n convention
  const Eigen::MatrixXd cov = sandwich_covariance(sys, rep.theta_hat);
  CHECK_THAT(rep.theta_hat[0], WithinAbs(mean, 1e-8));
  CHECK_THAT(cov(0, 0), WithinRel(var / n, 1e-8));
}

TEST_CASE("logistic sandwich matches the inverse information") {
  const auto d = logistic_data(100000, 0.8, 0.5, 17);
  const auto sys = logistic_score(d);
  const auto rep = solve_moments(sys, Eigen::VectorXd::Zero(2));
  REQUIRE(rep.converged);
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double p = oracle::expit(d.X.row(i).dot(rep.theta_hat));
    info += p * (1 - p) * d.X.row(i).transpose() * d.X.row(i);
  }
  const Eigen::Matrix2d inv = info.inverse();
  const Eigen::MatrixXd cov = sandwich_covariance(sys, rep.theta_hat);
  for (int a = 0; a < 2; ++a) CHECK_THAT(cov(a, a), WithinRel(inv(a, a), 0.05));
  CHECK_THAT(cov(0, 1), WithinRel(inv(0, 1), 0.05));
}

TEST_CASE("sandwich is symmetric positive semidefinite") {
  const auto d = logistic_data(2000, -0.2, 1.1, 23);
  const auto sys = logistic_score(d);
  const auto rep = solve_moments(sys, Eigen::VectorXd::Zero(2));
  const Eigen::MatrixXd cov = sandwich_covariance(sys, rep.theta_hat);
  CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("malformed systems are rejected") {
  MomentSystem sys;
  sys.param_dim = 2;
  sys.moment_dim = 1;
  sys.records = 3;
  sys.eval = [](Eigen::Index, const Eigen::VectorXd&, Eigen::Ref<Eigen::VectorXd> out) { out[0] = 0.0; };
  CHECK_THROWS(solve_moments(sys, Eigen::VectorXd::Zero(2)));
}
