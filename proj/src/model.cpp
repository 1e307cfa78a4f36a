#include "shadowmnar/model.hpp"

#include "shadowmnar/errors.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

namespace shadow {

namespace kernel {

double expit(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double clamp_probability(double p) noexcept {
  static const double kTop = std::nextafter(1.0, 0.0);
  if (p <= 0.0) return DBL_TRUE_MIN;
  if (p >= 1.0) return kTop;
  return p;
}

double response_probability(double baseline_logit, double log_odds_ratio) noexcept {
  return clamp_probability(expit(baseline_logit - log_odds_ratio));
}

double inverse_response_probability(double baseline_logit, double log_odds_ratio) noexcept {
  return 1.0 + std::exp(log_odds_ratio - baseline_logit);
}

}  // namespace kernel

double BaselinePropensity::linear_predictor(std::span<const double> x) const {
  return design.evaluate(x).dot(alpha);
}

double BaselinePropensity::probability(std::span<const double> x) const {
  return kernel::clamp_probability(kernel::expit(linear_predictor(x)));
}

double BaselineOutcome::mean_y(std::span<const double> x) const {
  return y_design.evaluate(x).dot(beta1);
}

double BaselineOutcome::mean_z(std::span<const double> x, double y) const {
  return z_design.evaluate(x).dot(beta2) + beta22 * y;
}

Eigen::VectorXd InstrumentSpec::evaluate(std::span<const double> x, double z) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  const auto nc = static_cast<Eigen::Index>(covariate_terms.size());
  covariate_terms.evaluate_into(x, out.head(nc));
  shadow_terms.evaluate_into(x, out.tail(out.size() - nc));
  out.tail(out.size() - nc) *= z;
  return out;
}

InstrumentSpec InstrumentSpec::with_covariates(const Design& covariates) {
  return {covariates, Design({Term{}}, covariates.covariate_names())};
}

InstrumentSpec InstrumentSpec::shadow_only(const std::vector<std::string>& names) {
  return {Design({}, names), Design({Term{}}, names)};
}

InstrumentSpec InstrumentSpec::parse(std::string_view formula,
                                     const std::vector<std::string>& names,
                                     const std::string& shadow_name) {
  std::vector<Term> covariate;
  std::vector<Term> shadow;
  std::string_view rest = formula;
  auto trim = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  while (true) {
    const auto plus = rest.find('+');
    const std::string_view token = trim(rest.substr(0, plus));
    const auto star = token.find_first_of("*:");
    const auto caret = token.find('^');
    const std::string_view left = trim(token.substr(0, std::min(star, caret)));
    const std::string_view right =
        star == std::string_view::npos ? std::string_view{} : trim(token.substr(star + 1));
    const bool shadow_left = left == shadow_name;
    const bool shadow_right = right == shadow_name;

    if (shadow_left || shadow_right) {
      if (caret != std::string_view::npos || (shadow_left && shadow_right)) {
        throw ConfigError("shadow variable may enter h only linearly: '" + std::string(token) + "'");
      }
      if (star == std::string_view::npos) {
        shadow.push_back(Term{});
      } else {
        shadow.push_back(Design::parse(shadow_left ? right : left, names).terms().front());
      }
    } else {
      covariate.push_back(Design::parse(token, names).terms().front());
    }
    if (plus == std::string_view::npos) break;
    rest = rest.substr(plus + 1);
  }
  if (shadow.empty()) {
    throw ConfigError("h must contain the shadow variable '" + shadow_name + "' to identify gamma");
  }
  return {Design(std::move(covariate), names), Design(std::move(shadow), names)};
}

std::string InstrumentSpec::formula(const std::string& shadow_name) const {
  std::string out = covariate_terms.formula();
  for (std::size_t k = 0; k < shadow_terms.size(); ++k) {
    if (!out.empty()) out += " + ";
    const std::string t = shadow_terms.term_name(k);
    out += t == "1" ? shadow_name : shadow_name + "*" + t;
  }
  return out;
}

double or_value(const LogOddsRatioModel& m, double y, std::span<const double>) {
  return m.value(y);
}

double propensity(const ModelSpec& m, double y, std::span<const double> x) {
  return kernel::response_probability(m.propensity.linear_predictor(x), m.odds_ratio.value(y));
}

double log_tilt_normalizer(const ModelSpec& m, std::span<const double> x) {
  const double delta = m.odds_ratio.tilt();
  const double s1 = m.outcome.sigma1;
  return delta * m.outcome.mean_y(x) + 0.5 * delta * delta * s1 * s1;
}

double tilt_normalizer(const ModelSpec& m, std::span<const double> x) {
  const double value = std::exp(log_tilt_normalizer(m, x));
  if (!std::isfinite(value)) {
    throw TiltOverflowError("tilt normalizer overflows for tilt " + std::to_string(m.odds_ratio.tilt()));
  }
  return value;
}

double mean_y_given_r0(const ModelSpec& m, std::span<const double> x) {
  const double s1 = m.outcome.sigma1;
  const double value = m.outcome.mean_y(x) + m.odds_ratio.tilt() * s1 * s1;
  if (!std::isfinite(value)) throw TiltOverflowError("tilted mean is not finite");
  return value;
}

Eigen::VectorXd mean_h_given_r0(const ModelSpec& m, std::span<const double> x) {
  const double mean_z = m.outcome.mean_z(x, mean_y_given_r0(m, x));
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.h.size()));
  const auto nc = static_cast<Eigen::Index>(m.h.covariate_terms.size());
  m.h.covariate_terms.evaluate_into(x, out.head(nc));
  m.h.shadow_terms.evaluate_into(x, out.tail(out.size() - nc));
  out.tail(out.size() - nc) *= mean_z;
  return out;
}

double marginal_response_prob(const ModelSpec& m, std::span<const double> x) {
  return kernel::clamp_probability(
      kernel::expit(m.propensity.linear_predictor(x) - log_tilt_normalizer(m, x)));
}

double tilt_normalizer_quadrature(const ModelSpec& m, std::span<const double> x,
                                  const GaussHermite& rule) {
  const double value = rule.expect_normal(m.outcome.mean_y(x), m.outcome.sigma1,
                                          [&](double y) { return std::exp(m.odds_ratio.value(y)); });
  if (!std::isfinite(value)) throw TiltOverflowError("quadrature tilt normalizer overflows");
  return value;
}

double mean_y_given_r0_quadrature(const ModelSpec& m, std::span<const double> x,
                                  const GaussHermite& rule) {
  const double mu = m.outcome.mean_y(x);
  const double s = m.outcome.sigma1;
  const double num = rule.expect_normal(mu, s, [&](double y) { return std::exp(m.odds_ratio.value(y)) * y; });
  const double den = tilt_normalizer_quadrature(m, x, rule);
  return num / den;
}

}  // namespace shadow
