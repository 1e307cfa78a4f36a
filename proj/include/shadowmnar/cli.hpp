#pragma once

#include "shadowmnar/csv_io.hpp"
#include "shadowmnar/datagen.hpp"
#include "shadowmnar/estimators.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shadow {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitEstimation = 4 };

/// Fully resolved settings for every subcommand. Empty formulas mean the
/// defaults: intercept plus all covariates for the propensity and both
/// outcome designs, h = (propensity design, shadow).
struct RunConfig {
  std::string command = "estimate";

  // estimate
  std::string data_path;
  ColumnMapping columns;
  std::string propensity_formula;
  std::string outcome_formula;
  std::string shadow_formula;
  std::string h_formula;
  std::vector<Method> methods{Method::kDR, Method::kREG, Method::kIPW, Method::kCMP, Method::kMARIPW};
  RegVariant reg_variant = RegVariant::kModelMean;

  // simulate
  std::vector<Scenario> scenarios{Scenario::kTT};
  std::vector<long> sizes{500};
  int reps = 1000;
  unsigned threads = 0;
  TruthParameters truth;
  bool emit_data = false;

  // identify-binary
  std::vector<double> binary_r1;  // z0y0, z0y1, z1y0, z1y1
  std::vector<double> binary_r0;  // z0, z1
  double grid_step = 0.01;
  std::optional<double> grid_tolerance;

  std::uint64_t seed = 20240601;
  double level = 0.95;
  std::string out_dir = "out";

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown or malformed values throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Working model for `data` from the configured formulas.
ModelSpec build_model(const RunConfig& cfg, const ShadowDataset& data);

struct EstimateOutcome {
  Method method = Method::kDR;
  std::optional<EstimationResult> result;
  std::string error;
  bool ok() const { return result && result->converged && error.empty(); }
};

/// Runs every configured method; failures are captured per method.
std::vector<EstimateOutcome> estimate_all(const RunConfig& cfg, const ShadowDataset& data);

/// Table with columns method, mu_hat, mu_ci_low, mu_ci_high, gamma_hat,
/// gamma_ci_low, gamma_ci_high, diagnostics.
void write_results_csv(const std::vector<EstimateOutcome>& outcomes, const std::filesystem::path& path);

/// Writes `config.json` into `dir`.
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir);

int run_estimate(const RunConfig& cfg, std::ostream& log);
int run_simulate(const RunConfig& cfg, std::ostream& log);
int run_identify_binary(const RunConfig& cfg, std::ostream& out);

/// Parses the command line (including --config files) and dispatches.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace shadow
