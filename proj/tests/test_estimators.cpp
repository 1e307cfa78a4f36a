#include "shadowmnar/datagen.hpp"
#include "shadowmnar/errors.hpp"
#include "shadowmnar/estimators.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace shadow;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

ShadowDataset tt_data(long n, std::uint64_t seed, double gamma = -0.5) {
  TruthParameters p;
  p.gamma = gamma;
  return generate(truth_model(Scenario::kTT, p), n, seed).observed;
}

// OLS of y on columns of X over rows with r == 1.
Eigen::VectorXd complete_case_ols(const Eigen::MatrixXd& X, const ShadowDataset& d) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < d.size(); ++i) if (d.r[i] > 0.5) rows.push_back(i);
  Eigen::MatrixXd A(rows.size(), X.cols());
  Eigen::VectorXd b(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    A.row(k) = X.row(rows[k]);
    b[k] = d.y[rows[k]];
  }
  return (A.transpose() * A).ldlt().solve(A.transpose() * b);
}

}  // namespace

TEST_CASE("baseline outcome fit recovers the responder law") {
  const auto d = tt_data(100000, 1);
  const auto spec = analysis_model();
  const auto fit = fit_baseline_outcome(d, spec.outcome.y_design, spec.outcome.z_design);
  CHECK_THAT(fit.outcome.beta1[0], WithinAbs(0.5, 0.02));
  CHECK_THAT(fit.outcome.beta1[1], WithinAbs(0.5, 0.02));
  CHECK_THAT(fit.outcome.beta2[0], WithinAbs(-0.5, 0.02));
  CHECK_THAT(fit.outcome.beta2[1], WithinAbs(0.5, 0.02));
  CHECK_THAT(fit.outcome.beta22, WithinAbs(1.0, 0.02));
  CHECK_THAT(fit.outcome.sigma1, WithinAbs(1.0, 0.02));
  CHECK_THAT(fit.outcome.sigma2, WithinAbs(1.0, 0.02));
  CHECK_FALSE(fit.sigma1_degenerate);
  CHECK_FALSE(fit.sigma2_degenerate);
  // Equals least squares on the complete cases.
  const Eigen::VectorXd ols = complete_case_ols(spec.outcome.y_design.matrix(d.x), d);
  CHECK((fit.outcome.beta1 - ols).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("noiseless shadow regression is recovered exactly and flagged") {
  auto d = tt_data(300, 2);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x = d.x(i, 0);
    if (d.r[i] > 0.5) d.z[i] = -0.5 + 0.5 * x * x + 1.0 * d.y[i];
  }
  const auto spec = analysis_model();
  const auto fit = fit_baseline_outcome(d, spec.outcome.y_design, spec.outcome.z_design);
  CHECK_THAT(fit.outcome.beta2[0], WithinAbs(-0.5, 1e-10));
  CHECK_THAT(fit.outcome.beta2[1], WithinAbs(0.5, 1e-10));
  CHECK_THAT(fit.outcome.beta22, WithinAbs(1.0, 1e-10));
  CHECK(fit.outcome.sigma2 < 1e-10);
  CHECK(fit.sigma2_degenerate);
}

TEST_CASE("rank deficiency names the collinear columns") {
  auto d = tt_data(200, 3);
  ShadowDataset two = d;
  two.covariate_names = {"x", "x2"};
  two.x.conservativeResize(Eigen::NoChange, 2);
  two.x.col(1) = 2.0 * d.x.col(0);
  const Design dd = Design::parse("1 + x + x2", two.covariate_names);
  try {
    fit_baseline_outcome(two, dd, dd);
    FAIL("expected RankDeficientError");
  } catch (const RankDeficientError& e) {
    CHECK_THAT(std::string(e.what()), ContainsSubstring("x2"));
    CHECK(e.columns() == std::vector<std::string>{"x", "x2"});
  }
}

TEST_CASE("baseline fit and estimators are invariant to record order") {
  const auto d = tt_data(800, 4);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(5));
  const auto p = d.permuted(order);
  const auto spec = analysis_model();
  const auto a = fit_baseline_outcome(d, spec.outcome.y_design, spec.outcome.z_design);
  const auto b = fit_baseline_outcome(p, spec.outcome.y_design, spec.outcome.z_design);
  CHECK((a.outcome.beta1 - b.outcome.beta1).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((a.outcome.beta2 - b.outcome.beta2).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK(std::abs(a.outcome.beta22 - b.outcome.beta22) <= 1e-12);
  CHECK(std::abs(a.outcome.sigma1 - b.outcome.sigma1) <= 1e-12);
  for (Method m : {Method::kDR, Method::kIPW, Method::kREG, Method::kCMP, Method::kMARIPW}) {
    INFO(method_name(m));
    const auto ra = estimate(m, d, spec);
    const auto rb = estimate(m, p, spec);
    CHECK(std::abs(ra.mu_hat - rb.mu_hat) <= 1e-9);
    CHECK(std::abs(ra.se_mu - rb.se_mu) <= 1e-9);
  }
}

TEST_CASE("IPW with gamma held at zero and h = d(x) is MAR-IPW") {
  const auto d = tt_data(1500, 6);
  auto spec = analysis_model();
  spec.h = InstrumentSpec{spec.propensity.design, Design({}, d.covariate_names)};
  EstimatorOptions ipw_opt;
  ipw_opt.fixed_gamma = 0.0;
  const auto ipw = estimate_ipw(d, spec, ipw_opt);
  EstimatorOptions mar_opt;
  mar_opt.mar_fit = MarPropensityFit::kCalibration;
  mar_opt.mar_include_shadow = false;
  const auto mar = estimate_mar_ipw(d, spec, mar_opt);
  REQUIRE(ipw.converged);
  REQUIRE(mar.converged);
  CHECK_THAT(ipw.mu_hat, WithinAbs(mar.mu_hat, 1e-10));
  CHECK_THAT(ipw.se_mu, WithinAbs(mar.se_mu, 1e-8));
}

TEST_CASE("REG with gamma held at zero is regression imputation") {
  const auto d = tt_data(1500, 7);
  const auto spec = analysis_model();
  EstimatorOptions opt;
  opt.fixed_gamma = 0.0;
  const Eigen::MatrixXd B = spec.outcome.y_design.matrix(d.x);
  const Eigen::VectorXd beta = complete_case_ols(B, d);
  const Eigen::VectorXd fitted = B * beta;
  const auto reg = estimate_reg(d, spec, opt);
  CHECK_THAT(reg.mu_hat, WithinAbs(fitted.mean(), 1e-10));

  opt.reg_variant = RegVariant::kObservedOutcome;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) acc += d.r[i] > 0.5 ? d.y[i] : fitted[i];
  const auto reg_obs = estimate_reg(d, spec, opt);
  CHECK_THAT(reg_obs.mu_hat, WithinAbs(acc / d.size(), 1e-10));
}

TEST_CASE("IPW weights reproduce the instrument mean") {
  const auto d = tt_data(1500, 8);
  const auto spec = analysis_model();
  const auto res = estimate_ipw(d, spec);
  REQUIRE(res.converged);
  REQUIRE(res.gamma_hat);
  const Eigen::MatrixXd D = spec.propensity.design.matrix(d.x);
  Eigen::Vector3d lhs = Eigen::Vector3d::Zero(), rhs = Eigen::Vector3d::Zero();
  double mu = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Eigen::Vector3d h(D(i, 0), D(i, 1), d.z[i]);
    rhs += h;
    if (d.r[i] < 0.5) continue;
    const double w = 1.0 + std::exp(-*res.gamma_hat * d.y[i] - D.row(i).dot(res.alpha_hat));
    lhs += w * h;
    mu += w * d.y[i];
  }
  CHECK(((lhs - rhs) / d.size()).lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK_THAT(res.mu_hat, WithinAbs(mu / d.size(), 1e-10));
}

TEST_CASE("location shift of y moves every mean by the shift") {
  const auto d = tt_data(1500, 9);
  auto shifted = d;
  const double c = 3.25;
  for (Eigen::Index i = 0; i < d.size(); ++i) if (d.r[i] > 0.5) shifted.y[i] += c;
  const auto spec = analysis_model();
  for (Method m : {Method::kREG, Method::kCMP, Method::kIPW}) {
    INFO(method_name(m));
    const auto a = estimate(m, d, spec);
    const auto b = estimate(m, shifted, spec);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK_THAT(b.mu_hat - a.mu_hat, WithinAbs(c, 1e-8));
    if (a.gamma_hat) CHECK_THAT(*b.gamma_hat, WithinAbs(*a.gamma_hat, 1e-7));
  }
  // DR weights pair alpha (fitted jointly with the IPW gamma) with the DR
  // gamma, so a shift moves the baseline by (gamma_ipw - gamma_dr) c. The
  // estimator is equivariant only up to that finite-sample gap.
  const auto a = estimate_dr(d, spec);
  const auto b = estimate_dr(shifted, spec);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(std::abs(b.mu_hat - a.mu_hat - c) <= 0.1 * a.se_mu);
}

TEST_CASE("no missingness reduces CMP and MAR-IPW to the sample mean") {
  auto d = tt_data(500, 10);
  d.r.setOnes();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < d.size(); ++i) if (std::isnan(d.y[i])) d.y[i] = nd(rng);
  const double ybar = d.y.mean();
  const auto spec = analysis_model();
  CHECK_THAT(estimate_cmp(d, spec).mu_hat, WithinAbs(ybar, 1e-12));
  CHECK_THAT(estimate_mar_ipw(d, spec).mu_hat, WithinAbs(ybar, 1e-12));
}

TEST_CASE("MAR-IPW is consistent under MCAR") {
  // Missing completely at random, 30%.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u;
  const long n = 20000;
  ShadowDataset d;
  d.covariate_names = {"x"};
  d.x.resize(n, 1);
  d.z.resize(n);
  d.r.resize(n);
  d.y.resize(n);
  Eigen::VectorXd full(n);
  for (long i = 0; i < n; ++i) {
    d.x(i, 0) = nd(rng);
    full[i] = 1.0 + d.x(i, 0) + nd(rng);
    d.z[i] = full[i] + nd(rng);
    d.r[i] = u(rng) < 0.7 ? 1.0 : 0.0;
    d.y[i] = d.r[i] > 0.5 ? full[i] : std::nan("");
  }
  const auto res = estimate_mar_ipw(d, oracle::linear_model(0.0));
  REQUIRE(res.converged);
  CHECK(std::abs(res.mu_hat - full.mean()) <= 4.0 * res.se_mu);
}

TEST_CASE("result layout and intervals") {
  const auto d = tt_data(1500, 13);
  const auto spec = analysis_model();
  const double z = normal_critical_value(0.95);
  CHECK_THAT(z, WithinAbs(1.959963984540054, 1e-12));
  for (Method m : {Method::kDR, Method::kIPW, Method::kREG, Method::kCMP, Method::kMARIPW}) {
    INFO(method_name(m));
    const auto r = estimate(m, d, spec);
    REQUIRE(r.converged);
    CHECK(r.ci_mu.low <= r.ci_mu.high);
    CHECK_THAT(r.ci_mu.low, WithinAbs(r.mu_hat - z * r.se_mu, 1e-12));
    CHECK_THAT(r.ci_mu.high, WithinAbs(r.mu_hat + z * r.se_mu, 1e-12));
    CHECK(r.cov.rows() == r.theta.size());
    CHECK((r.cov - r.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    const bool has_gamma = m == Method::kDR || m == Method::kIPW || m == Method::kREG;
    CHECK(r.gamma_hat.has_value() == has_gamma);
    if (has_gamma) {
      CHECK(r.ci_gamma->low <= *r.gamma_hat);
      CHECK(*r.gamma_hat <= r.ci_gamma->high);
      CHECK_THAT(r.se_of("gamma"), WithinAbs(*r.se_gamma, 1e-15));
    }
    CHECK_THAT(r.se_of("mu"), WithinAbs(r.se_mu, 1e-15));
  }
  const auto dr = estimate_dr(d, spec);
  REQUIRE(dr.diagnostics.shadow_relevance);
  CHECK(*dr.diagnostics.shadow_relevance > 10.0);
  CHECK(dr.diagnostics.max_weight >= 1.0);
}

TEST_CASE("large sample estimates sit near the truth when models are right") {
  const auto sim = generate(truth_model(Scenario::kTT), 20000, 14);
  const double mu = true_mu(truth_model(Scenario::kTT));
  const auto spec = analysis_model();
  for (Method m : {Method::kDR, Method::kIPW, Method::kREG}) {
    INFO(method_name(m));
    const auto r = estimate(m, sim.observed, spec);
    REQUIRE(r.converged);
    CHECK(std::abs(r.mu_hat - mu) <= 4.0 * r.se_mu);
    CHECK(std::abs(*r.gamma_hat + 0.5) <= 4.0 * *r.se_gamma);
  }
  // Ignoring MNAR biases the complete-case regression.
  const auto cmp = estimate_cmp(sim.observed, spec);
  CHECK(std::abs(cmp.mu_hat - mu) > 4.0 * cmp.se_mu);
}

TEST_CASE("extreme weights are counted, not truncated") {
  const auto d = tt_data(1500, 15);
  const auto spec = analysis_model();
  EstimatorOptions opt;
  opt.extreme_weight = 1.5;
  const auto r = estimate_ipw(d, spec, opt);
  CHECK(r.diagnostics.extreme_weight_count > 0);
  CHECK_FALSE(r.diagnostics.warnings.empty());
  const auto plain = estimate_ipw(d, spec);
  CHECK(r.mu_hat == plain.mu_hat);
}

TEST_CASE("instrument dimension is checked") {
  const auto d = tt_data(300, 16);
  auto spec = analysis_model();
  spec.h = InstrumentSpec{spec.propensity.design, Design({}, d.covariate_names)};
  CHECK_THROWS_AS(estimate_ipw(d, spec), ConfigError);
  CHECK_THROWS_AS(estimate_reg(d, spec), ConfigError);
}

TEST_CASE("method names") {
  CHECK(parse_method("DR") == Method::kDR);
  CHECK(parse_method("maripw") == Method::kMARIPW);
  CHECK(method_name(Method::kMARIPW) == "marIPW");
  CHECK(parse_method_list("dr, ipw,reg").size() == 3);
  CHECK_THROWS_AS(parse_method("ols"), ConfigError);
}
