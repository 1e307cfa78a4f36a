#pragma once

// Independent reference computations shared by the test binaries. Nothing
// here calls into the library's numerical routines.

#include "shadowmnar/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_pdf(double y, double mean, double sd) {
  const double t = (y - mean) / sd;
  return std::exp(-0.5 * t * t) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// Composite Simpson rule on [a, b] with `panels` (even) subintervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int k = 1; k < panels; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return acc * h / 3.0;
}

/// E[g(Y)] for Y ~ N(mean, sd^2), integrated over mean +- 14 sd.
inline double normal_expectation(const std::function<double(double)>& g, double mean, double sd) {
  return simpson([&](double y) { return g(y) * normal_pdf(y, mean, sd); }, mean - 14.0 * sd, mean + 14.0 * sd);
}

inline double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Logistic maximum likelihood by plain IRLS.
inline Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd p = (X * b).unaryExpr([](double t) { return expit(t); });
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd step = info.ldlt().solve(X.transpose() * (r - p));
    b += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  return b;
}

/// Model on one covariate `x` with intercept-only designs, so that
/// mu1 = beta10, logit pi0 = a0 and the shadow mean is b20 + b22 y.
inline shadow::ModelSpec constant_model(double gamma, double mu1, double sigma1, double a0 = 0.0, double b20 = -0.5,
                                        double b22 = 1.0, double sigma2 = 1.0) {
  using namespace shadow;
  const std::vector<std::string> names{"x"};
  ModelSpec m;
  m.odds_ratio.gamma = gamma;
  m.propensity.design = Design::parse("1", names);
  m.propensity.alpha = Eigen::VectorXd::Constant(1, a0);
  m.outcome.y_design = Design::parse("1", names);
  m.outcome.beta1 = Eigen::VectorXd::Constant(1, mu1);
  m.outcome.sigma1 = sigma1;
  m.outcome.z_design = Design::parse("1", names);
  m.outcome.beta2 = Eigen::VectorXd::Constant(1, b20);
  m.outcome.beta22 = b22;
  m.outcome.sigma2 = sigma2;
  m.h = InstrumentSpec::with_covariates(m.propensity.design);
  return m;
}

/// Model on one covariate `x` with linear designs everywhere.
inline shadow::ModelSpec linear_model(double gamma, double a0 = 0.8, double a1 = 0.5, double b10 = 0.5,
                                      double b11 = 0.5, double sigma1 = 1.0) {
  using namespace shadow;
  const std::vector<std::string> names{"x"};
  ModelSpec m;
  m.odds_ratio.gamma = gamma;
  m.propensity.design = Design::parse("1 + x", names);
  m.propensity.alpha = Eigen::Vector2d(a0, a1);
  m.outcome.y_design = Design::parse("1 + x", names);
  m.outcome.beta1 = Eigen::Vector2d(b10, b11);
  m.outcome.sigma1 = sigma1;
  m.outcome.z_design = Design::parse("1 + x", names);
  m.outcome.beta2 = Eigen::Vector2d(-0.5, 0.5);
  m.outcome.beta22 = 1.0;
  m.outcome.sigma2 = 1.0;
  m.h = InstrumentSpec::with_covariates(m.propensity.design);
  return m;
}

}  // namespace oracle
