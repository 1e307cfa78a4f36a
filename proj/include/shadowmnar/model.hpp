#pragma once

#include "shadowmnar/design.hpp"
#include "shadowmnar/quadrature.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace shadow {

/// Linear log odds ratio OR(y | x) = -gamma * y.
///
/// The tilt applied to the responder outcome law is delta = -gamma, so a
/// negative gamma makes non-responders' outcomes larger.
struct LogOddsRatioModel {
  double gamma = 0.0;

  double value(double y) const noexcept { return -gamma * y; }
  double tilt() const noexcept { return -gamma; }
};

/// Logistic baseline response probability P(r = 1 | y = 0, x).
struct BaselinePropensity {
  Design design;
  Eigen::VectorXd alpha;

  double linear_predictor(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

/// Gaussian responder outcome law:
///   Y | r = 1, x     ~ N(beta1' b1(x), sigma1^2)
///   Z | y, x, r = 1  ~ N(beta2' b2(x) + beta22 y, sigma2^2)
struct BaselineOutcome {
  Design y_design;
  Eigen::VectorXd beta1;
  double sigma1 = 1.0;
  Design z_design;
  Eigen::VectorXd beta2;
  double beta22 = 0.0;
  double sigma2 = 1.0;

  double mean_y(std::span<const double> x) const;
  double mean_z(std::span<const double> x, double y) const;
};

/// Instrument function h(x, z) = (c(x)', z * s(x)')'.
///
/// Only the `shadow_terms` block varies with z, so it is the block that
/// carries information about gamma. The default for IPW and DR is
/// (d(x)', z)'; REG uses z alone.
struct InstrumentSpec {
  Design covariate_terms;
  Design shadow_terms;

  std::size_t size() const noexcept { return covariate_terms.size() + shadow_terms.size(); }
  Eigen::VectorXd evaluate(std::span<const double> x, double z) const;

  static InstrumentSpec with_covariates(const Design& covariates);
  static InstrumentSpec shadow_only(const std::vector<std::string>& covariate_names);
  /// Formula over covariates plus the shadow column, which may only
  /// appear linearly or multiplied by one covariate (e.g. `1 + x + z + z*x`).
  static InstrumentSpec parse(std::string_view formula,
                              const std::vector<std::string>& covariate_names,
                              const std::string& shadow_name);
  std::string formula(const std::string& shadow_name) const;
};

struct ModelSpec {
  LogOddsRatioModel odds_ratio;
  BaselinePropensity propensity;
  BaselineOutcome outcome;
  InstrumentSpec h;
};

double or_value(const LogOddsRatioModel& m, double y, std::span<const double> x = {});

/// P(r = 1 | y, x) = pi0 / (pi0 + exp{OR(y|x)} (1 - pi0)), evaluated as
/// expit(logit pi0 - OR).
double propensity(const ModelSpec& m, double y, std::span<const double> x);

/// log E[exp{OR(Y|x)} | r = 1, x] for the Gaussian baseline.
double log_tilt_normalizer(const ModelSpec& m, std::span<const double> x);
double tilt_normalizer(const ModelSpec& m, std::span<const double> x);
/// E(Y | r = 0, x): the exp{OR}-tilted responder mean, mu1(x) + delta sigma1^2.
double mean_y_given_r0(const ModelSpec& m, std::span<const double> x);
/// E[h(x, Z) | r = 0, x]. OR does not involve z, so Z | y, x keeps its
/// responder law and only its y-dependence is tilted.
Eigen::VectorXd mean_h_given_r0(const ModelSpec& m, std::span<const double> x);
/// P(r = 1 | x) after integrating y out of the pattern-mixture density.
double marginal_response_prob(const ModelSpec& m, std::span<const double> x);

// Numerical-integration counterparts for cross-checking and for
// non-Gaussian baselines.
double tilt_normalizer_quadrature(const ModelSpec& m, std::span<const double> x,
                                  const GaussHermite& rule);
double mean_y_given_r0_quadrature(const ModelSpec& m, std::span<const double> x,
                                  const GaussHermite& rule);

/// Scalar kernels shared by the estimators, which precompute linear
/// predictors for every record.
namespace kernel {

double expit(double t) noexcept;
/// Probability in the open unit interval up to floating-point resolution.
double clamp_probability(double p) noexcept;
/// P(r = 1 | y, x) from logit pi0 and the log odds ratio value.
double response_probability(double baseline_logit, double log_odds_ratio) noexcept;
/// 1 / P(r = 1 | y, x) = 1 + exp{OR - logit pi0}.
double inverse_response_probability(double baseline_logit, double log_odds_ratio) noexcept;

}  // namespace kernel

}  // namespace shadow
