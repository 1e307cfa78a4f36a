#pragma once

#include "shadowmnar/datagen.hpp"
#include "shadowmnar/estimators.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace shadow {

struct StudyConfig {
  std::vector<Scenario> scenarios{Scenario::kFT, Scenario::kTF, Scenario::kTT, Scenario::kFF};
  std::vector<long> sizes{500, 1500};
  int reps = 1000;
  std::vector<Method> methods{Method::kDR, Method::kIPW, Method::kREG};
  std::uint64_t seed = 20240601;
  TruthParameters truth;
  EstimatorOptions options;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 0;
};

struct ReplicateRecord {
  Scenario scenario = Scenario::kTT;
  long n = 0;
  Method method = Method::kDR;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::string error;
  double mu_hat = 0.0;
  double se_mu = 0.0;
  Interval ci_mu;
  std::optional<double> gamma_hat;
  std::optional<double> se_gamma;
  std::optional<Interval> ci_gamma;
  /// Mean of the outcome before deletion.
  double full_data_mean = 0.0;
};

struct CellSummary {
  Scenario scenario = Scenario::kTT;
  long n = 0;
  Method method = Method::kDR;
  int replications = 0;
  int converged = 0;
  int nonconverged = 0;
  double true_mu = 0.0;
  double true_gamma = 0.0;

  double mean_mu = 0.0;
  /// NaN when fewer than two replicates converged.
  double sd_mu = 0.0;
  double bias_mu = 0.0;
  double mc_se_mu = 0.0;
  double mean_se_mu = 0.0;
  double coverage_mu = 0.0;
  double coverage_mu_se = 0.0;
  double ci_length_mu = 0.0;

  bool has_gamma = false;
  double mean_gamma = 0.0;
  double sd_gamma = 0.0;
  double mean_se_gamma = 0.0;
  double coverage_gamma = 0.0;
  double coverage_gamma_se = 0.0;

  bool sd_defined() const noexcept { return converged >= 2; }
};

struct MCReport {
  StudyConfig config;
  std::vector<CellSummary> cells;
  std::vector<ReplicateRecord> replicates;

  const CellSummary* find(Scenario s, long n, Method m) const;
};

/// Seed of one replicate, derived from the master seed and the cell so
/// that any cell can be re-run alone.
std::uint64_t replicate_seed(std::uint64_t master, Scenario s, long n, int replicate);

/// Runs every (scenario, size, replicate); each replicate's dataset is
/// analysed by all methods. Failures are recorded, never thrown.
MCReport run_study(const StudyConfig& cfg);

/// Writes coverage_table.csv, summary.csv, estimates.csv,
/// {scenario}_{n}_{method}.csv per cell and summary.json into `dir`.
void export_report(const MCReport& report, const std::filesystem::path& dir);

}  // namespace shadow
