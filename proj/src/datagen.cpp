#include "shadowmnar/datagen.hpp"

#include "shadowmnar/errors.hpp"
#include "shadowmnar/quadrature.hpp"

#include <array>
#include <cctype>

namespace shadow {

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kFT:
      return "FT";
    case Scenario::kTF:
      return "TF";
    case Scenario::kTT:
      return "TT";
    case Scenario::kFF:
      return "FF";
  }
  return "?";
}

Scenario parse_scenario(std::string_view name) {
  std::string upper;
  for (char c : name) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "FT") return Scenario::kFT;
  if (upper == "TF") return Scenario::kTF;
  if (upper == "TT") return Scenario::kTT;
  if (upper == "FF") return Scenario::kFF;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected FT, TF, TT, FF)");
}

namespace {

const std::vector<std::string> kNames{"x"};

Design design(const std::vector<Term>& terms) { return Design(terms, kNames); }

const Term kOne{Term::Kind::kIntercept, -1, -1};
const Term kX{Term::Kind::kLinear, 0, -1};
const Term kX2{Term::Kind::kSquare, 0, -1};

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double e : v) out[k++] = e;
  return out;
}

}  // namespace

ModelSpec truth_model(Scenario s, const TruthParameters& p) {
  const bool propensity_correct = s == Scenario::kTT || s == Scenario::kTF;
  const bool outcome_correct = s == Scenario::kTT || s == Scenario::kFT;

  ModelSpec m;
  m.odds_ratio.gamma = p.gamma;
  if (propensity_correct) {
    m.propensity = {design({kOne, kX}), vec({p.alpha0, p.alpha1})};
  } else {
    m.propensity = {design({kOne, kX, kX2}), vec({p.alpha0, p.alpha1, -0.5 * p.alpha1})};
  }
  BaselineOutcome& o = m.outcome;
  if (outcome_correct) {
    o.y_design = design({kOne, kX});
    o.beta1 = vec({p.beta10, p.beta11});
    o.z_design = design({kOne, kX2});
    o.beta2 = vec({p.beta20, p.beta21});
  } else {
    o.y_design = design({kOne, kX, kX2});
    o.beta1 = vec({p.beta10, 0.5 * p.beta11, 0.2 * p.beta11});
    o.z_design = design({kOne, kX, kX2});
    o.beta2 = vec({p.beta20, 2.0 * p.beta21, p.beta21});
  }
  o.beta22 = p.beta22;
  o.sigma1 = p.sigma1;
  o.sigma2 = p.sigma2;
  m.h = InstrumentSpec::with_covariates(m.propensity.design);
  return m;
}

ModelSpec analysis_model() {
  ModelSpec m = truth_model(Scenario::kTT);
  m.h = InstrumentSpec::with_covariates(m.propensity.design);
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t v = seed ^ (stream + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

DrawnRecord draw_given_x(const ModelSpec& truth, std::span<const double> x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const BaselineOutcome& o = truth.outcome;

  DrawnRecord rec;
  rec.r = uniform(rng) < marginal_response_prob(truth, x) ? 1.0 : 0.0;
  const double shift = rec.r > 0.5 ? 0.0 : truth.odds_ratio.tilt() * o.sigma1 * o.sigma1;
  rec.y = o.mean_y(x) + shift + o.sigma1 * normal(rng);
  rec.z = o.mean_z(x, rec.y) + o.sigma2 * normal(rng);
  return rec;
}

SimulatedDataset generate(const ModelSpec& truth, long n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample size must be positive");
  SimulatedDataset out;
  ShadowDataset& d = out.observed;
  d.covariate_names = kNames;
  d.x.resize(n, 1);
  d.z.resize(n);
  d.r.resize(n);
  d.y.resize(n);
  out.y_full.resize(n);
  for (long i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::array<double, 1> x{normal(rng)};
    const DrawnRecord rec = draw_given_x(truth, x, rng);
    d.x(i, 0) = x[0];
    d.z[i] = rec.z;
    d.r[i] = rec.r;
    d.y[i] = rec.r > 0.5 ? rec.y : std::numeric_limits<double>::quiet_NaN();
    out.y_full[i] = rec.y;
  }
  return out;
}

SimulatedDataset generate(const ScenarioConfig& cfg) {
  return generate(truth_model(cfg.scenario, cfg.truth), cfg.n, cfg.seed);
}

double true_mu(const ModelSpec& truth, int nodes) {
  const GaussHermite rule(nodes);
  const double delta = truth.odds_ratio.tilt();
  const double s1 = truth.outcome.sigma1;
  return rule.expect([&](double xv) {
    const std::array<double, 1> x{xv};
    const double p1 = marginal_response_prob(truth, x);
    const double mu1 = truth.outcome.mean_y(x);
    return p1 * mu1 + (1.0 - p1) * (mu1 + delta * s1 * s1);
  });
}

double true_mu(const ScenarioConfig& cfg, int nodes) {
  return true_mu(truth_model(cfg.scenario, cfg.truth), nodes);
}

}  // namespace shadow
