#pragma once

#include "shadowmnar/dataset.hpp"
#include "shadowmnar/model.hpp"
#include "shadowmnar/solver.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shadow {

enum class Method { kDR, kIPW, kREG, kCMP, kMARIPW };

std::string_view method_name(Method m);
/// Accepts dr, ipw, reg, cmp, maripw (case-insensitive).
Method parse_method(std::string_view name);
std::vector<Method> parse_method_list(std::string_view comma_separated);

/// Which responder term enters the REG mean: the fitted E(Y | r=1, x)
/// or the observed Y.
enum class RegVariant { kModelMean, kObservedOutcome };

/// Fit of the MAR response model used by marIPW.
enum class MarPropensityFit { kMaximumLikelihood, kCalibration };

struct EstimatorOptions {
  double level = 0.95;
  /// Hold gamma at this value instead of estimating it (IPW, REG, DR).
  std::optional<double> fixed_gamma;
  RegVariant reg_variant = RegVariant::kModelMean;
  MarPropensityFit mar_fit = MarPropensityFit::kMaximumLikelihood;
  /// marIPW response model uses (d(x), z) when true, d(x) alone otherwise.
  bool mar_include_shadow = true;
  /// Inverse weights above this are counted in the diagnostics.
  double extreme_weight = 1e4;
  SolverOptions solver;
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool contains(double v) const noexcept { return low <= v && v <= high; }
  double length() const noexcept { return high - low; }
};

struct Diagnostics {
  double max_weight = 0.0;
  Eigen::Index extreme_weight_count = 0;
  /// |beta22| / se(beta22); small values mean a weak shadow variable.
  std::optional<double> shadow_relevance;
  std::vector<std::string> warnings;
};

struct EstimationResult {
  Method method = Method::kDR;
  double mu_hat = 0.0;
  double se_mu = 0.0;
  Interval ci_mu;
  std::optional<double> gamma_hat;
  std::optional<double> se_gamma;
  std::optional<Interval> ci_gamma;
  Eigen::VectorXd alpha_hat;
  Eigen::VectorXd beta_hat;

  /// Stacked parameter vector, names and sandwich covariance.
  Eigen::VectorXd theta;
  std::vector<std::string> param_names;
  Eigen::MatrixXd cov;

  /// Report of the solve that produced gamma (or the propensity fit for
  /// marIPW); `stages` holds every solve in order.
  SolveReport solver;
  std::vector<SolveReport> stages;
  bool converged = true;
  Diagnostics diagnostics;

  double se_of(std::string_view param) const;
};

/// Gaussian ML of the responder outcome law, plus quality flags.
struct BaselineFit {
  BaselineOutcome outcome;
  double beta22_se = 0.0;
  bool sigma1_degenerate = false;
  bool sigma2_degenerate = false;
  Eigen::Index complete_cases = 0;
};

/// Ordinary least squares on complete cases: y on b1(x), z on (b2(x), y).
/// Throws RankDeficientError naming collinear columns.
BaselineFit fit_baseline_outcome(const ShadowDataset& data, const Design& y_design, const Design& z_design);

/// Logistic ML of r on the rows of `design`.
SolveReport fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& r,
                         const SolverOptions& options = {});

EstimationResult estimate_ipw(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options = {});
EstimationResult estimate_reg(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options = {});
EstimationResult estimate_dr(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options = {});
EstimationResult estimate_cmp(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options = {});
EstimationResult estimate_mar_ipw(const ShadowDataset& data, const ModelSpec& spec,
                                  const EstimatorOptions& options = {});
EstimationResult estimate(Method method, const ShadowDataset& data, const ModelSpec& spec,
                          const EstimatorOptions& options = {});

/// Two-sided standard normal quantile for a central interval of `level`.
double normal_critical_value(double level);

}  // namespace shadow
