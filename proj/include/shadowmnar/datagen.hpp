#pragma once

#include "shadowmnar/dataset.hpp"
#include "shadowmnar/model.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace shadow {

/// Simulation cells. The first letter says whether the baseline missing
/// data mechanism used for analysis is correct, the second whether the
/// baseline outcome model is.
enum class Scenario { kFT, kTF, kTT, kFF };

std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

/// Parameter values of the normal-outcome study.
struct TruthParameters {
  double alpha0 = 0.8;
  double alpha1 = 0.5;
  double beta10 = 0.5;
  double beta11 = 0.5;
  double beta20 = -0.5;
  double beta21 = 0.5;
  double beta22 = 1.0;
  double gamma = -0.5;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::kTT;
  long n = 500;
  std::uint64_t seed = 1;
  TruthParameters truth;
};

/// Data-generating model for a cell, on a single covariate `x`.
///   outcome A: mu1 = b10 + b11 (0.5 x + 0.2 x^2), z-mean b20 + b21 (2x + x^2) + b22 y
///   outcome B: mu1 = b10 + b11 x,                 z-mean b20 + b21 x^2 + b22 y
///   propensity A: logit pi0 = a0 + a1 (x - 0.5 x^2)
///   propensity B: logit pi0 = a0 + a1 x
ModelSpec truth_model(Scenario s, const TruthParameters& p = {});

/// The working model every cell is analysed with (forms B, h = (1, x, z)).
ModelSpec analysis_model();

/// SplitMix64 finalizer over a combined key; used to derive independent
/// per-record and per-replicate seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct DrawnRecord {
  double r = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// One draw of (R, Y, Z) given x from the pattern-mixture density:
/// R ~ Bernoulli(P(r=1|x)), Y | r=1 from the responder law, Y | r=0 from
/// its exp{OR}-tilt N(mu1 + delta sigma1^2, sigma1^2), Z | y from the
/// shadow law shared by both patterns.
DrawnRecord draw_given_x(const ModelSpec& truth, std::span<const double> x, std::mt19937_64& rng);

/// Covariate X ~ N(0, 1); record i uses the stream mix_seed(seed, i).
SimulatedDataset generate(const ModelSpec& truth, long n, std::uint64_t seed);
SimulatedDataset generate(const ScenarioConfig& cfg);

/// E(Y) = E_X[p1(X) mu1(X) + (1 - p1(X)) (mu1(X) + delta sigma1^2)] by
/// Gauss-Hermite quadrature over X ~ N(0, 1).
double true_mu(const ModelSpec& truth, int nodes = 256);
double true_mu(const ScenarioConfig& cfg, int nodes = 256);

}  // namespace shadow
