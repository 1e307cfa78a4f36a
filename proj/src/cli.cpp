#include "shadowmnar/cli.hpp"

#include "shadowmnar/binaryid.hpp"
#include "shadowmnar/errors.hpp"
#include "shadowmnar/mc.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace shadow {

namespace {

using nlohmann::json;

std::string lowered(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Scenario> parse_scenarios(const std::string& text) {
  if (lowered(text) == "all") return {Scenario::kFT, Scenario::kTF, Scenario::kTT, Scenario::kFF};
  std::vector<Scenario> out;
  for (const auto& s : split_list(text)) out.push_back(parse_scenario(s));
  if (out.empty()) throw ConfigError("no scenario given");
  return out;
}

std::vector<long> parse_sizes(const std::string& text) {
  std::vector<long> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || v < 2) throw ConfigError("invalid sample size '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("no sample size given");
  return out;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw ConfigError(std::string("invalid number '") + s + "' in " + what);
    out.push_back(v);
  }
  if (out.size() != expected) {
    throw ConfigError(std::string(what) + " needs " + std::to_string(expected) + " values, got " +
                      std::to_string(out.size()));
  }
  return out;
}

std::string join_methods(const std::vector<Method>& ms) {
  std::string s;
  for (std::size_t k = 0; k < ms.size(); ++k) s += (k ? "," : "") + lowered(std::string(method_name(ms[k])));
  return s;
}

template <class T>
void take(const json& j, const char* key, T& into) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["data"] = data_path;
  j["outcome"] = columns.outcome;
  j["shadow"] = columns.shadow;
  j["covariates"] = columns.covariates;
  j["missing_indicator"] = columns.missing_indicator ? json(*columns.missing_indicator) : json(nullptr);
  j["na_token"] = columns.na_token;
  j["propensity_formula"] = propensity_formula;
  j["outcome_formula"] = outcome_formula;
  j["shadow_formula"] = shadow_formula;
  j["h_formula"] = h_formula;
  j["methods"] = join_methods(methods);
  j["reg_variant"] = reg_variant == RegVariant::kModelMean ? "model" : "observed";
  std::vector<std::string> sc;
  for (auto s : scenarios) sc.emplace_back(scenario_name(s));
  j["scenarios"] = sc;
  j["sizes"] = sizes;
  j["reps"] = reps;
  j["threads"] = threads;
  j["truth"] = {{"alpha0", truth.alpha0}, {"alpha1", truth.alpha1}, {"beta10", truth.beta10},
                {"beta11", truth.beta11}, {"beta20", truth.beta20}, {"beta21", truth.beta21},
                {"beta22", truth.beta22}, {"gamma", truth.gamma},   {"sigma1", truth.sigma1},
                {"sigma2", truth.sigma2}};
  j["emit_data"] = emit_data;
  j["binary_r1"] = binary_r1;
  j["binary_r0"] = binary_r0;
  j["grid_step"] = grid_step;
  j["grid_tolerance"] = grid_tolerance ? json(*grid_tolerance) : json(nullptr);
  j["seed"] = seed;
  j["level"] = level;
  j["out"] = out_dir;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  take(j, "command", c.command);
  take(j, "data", c.data_path);
  take(j, "outcome", c.columns.outcome);
  take(j, "shadow", c.columns.shadow);
  take(j, "covariates", c.columns.covariates);
  if (j.contains("missing_indicator") && !j["missing_indicator"].is_null()) {
    std::string mi;
    take(j, "missing_indicator", mi);
    c.columns.missing_indicator = mi;
  }
  take(j, "na_token", c.columns.na_token);
  take(j, "propensity_formula", c.propensity_formula);
  take(j, "outcome_formula", c.outcome_formula);
  take(j, "shadow_formula", c.shadow_formula);
  take(j, "h_formula", c.h_formula);
  if (j.contains("methods")) {
    std::string m;
    if (j["methods"].is_array()) {
      for (const auto& e : j["methods"]) m += (m.empty() ? "" : ",") + e.get<std::string>();
    } else {
      take(j, "methods", m);
    }
    c.methods = parse_method_list(m);
  }
  if (j.contains("reg_variant")) {
    std::string v;
    take(j, "reg_variant", v);
    if (v == "model") c.reg_variant = RegVariant::kModelMean;
    else if (v == "observed") c.reg_variant = RegVariant::kObservedOutcome;
    else throw ConfigError("reg_variant must be 'model' or 'observed'");
  }
  if (j.contains("scenarios")) {
    std::vector<std::string> sc;
    if (j["scenarios"].is_string()) sc = {j["scenarios"].get<std::string>()};
    else take(j, "scenarios", sc);
    std::string joined;
    for (const auto& s : sc) joined += (joined.empty() ? "" : ",") + s;
    c.scenarios = parse_scenarios(joined);
  }
  take(j, "sizes", c.sizes);
  take(j, "reps", c.reps);
  take(j, "threads", c.threads);
  if (j.contains("truth")) {
    const json& t = j["truth"];
    take(t, "alpha0", c.truth.alpha0);
    take(t, "alpha1", c.truth.alpha1);
    take(t, "beta10", c.truth.beta10);
    take(t, "beta11", c.truth.beta11);
    take(t, "beta20", c.truth.beta20);
    take(t, "beta21", c.truth.beta21);
    take(t, "beta22", c.truth.beta22);
    take(t, "gamma", c.truth.gamma);
    take(t, "sigma1", c.truth.sigma1);
    take(t, "sigma2", c.truth.sigma2);
  }
  take(j, "emit_data", c.emit_data);
  take(j, "binary_r1", c.binary_r1);
  take(j, "binary_r0", c.binary_r0);
  take(j, "grid_step", c.grid_step);
  if (j.contains("grid_tolerance") && !j["grid_tolerance"].is_null()) {
    double t = 0.0;
    take(j, "grid_tolerance", t);
    c.grid_tolerance = t;
  }
  take(j, "seed", c.seed);
  take(j, "level", c.level);
  take(j, "out", c.out_dir);
  return c;
}

ModelSpec build_model(const RunConfig& cfg, const ShadowDataset& data) {
  const auto& names = data.covariate_names;
  auto design = [&](const std::string& f) {
    return f.empty() ? Design::intercept_plus_all(names) : Design::parse(f, names);
  };
  ModelSpec spec;
  spec.propensity.design = design(cfg.propensity_formula);
  spec.outcome.y_design = design(cfg.outcome_formula);
  spec.outcome.z_design = design(cfg.shadow_formula);
  spec.h = cfg.h_formula.empty() ? InstrumentSpec::with_covariates(spec.propensity.design)
                                 : InstrumentSpec::parse(cfg.h_formula, names, data.shadow_name);
  return spec;
}

std::vector<EstimateOutcome> estimate_all(const RunConfig& cfg, const ShadowDataset& data) {
  const ModelSpec spec = build_model(cfg, data);
  EstimatorOptions opt;
  opt.level = cfg.level;
  opt.reg_variant = cfg.reg_variant;
  std::vector<EstimateOutcome> out;
  for (Method m : cfg.methods) {
    EstimateOutcome o;
    o.method = m;
    try {
      o.result = estimate(m, data, spec, opt);
      if (!o.result->converged) {
        o.error = o.result->solver.message.empty() ? "solver did not converge" : o.result->solver.message;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

std::string diagnostics_text(const EstimateOutcome& o) {
  std::vector<std::string> parts;
  if (!o.error.empty()) parts.push_back("failed: " + o.error);
  if (o.result) {
    const auto& d = o.result->diagnostics;
    std::ostringstream ss;
    ss << std::setprecision(4);
    if (d.max_weight > 0.0) {
      ss << "max_weight=" << d.max_weight;
      parts.push_back(ss.str());
      ss.str("");
    }
    if (d.extreme_weight_count > 0) parts.push_back("extreme_weights=" + std::to_string(d.extreme_weight_count));
    if (d.shadow_relevance) {
      ss << "shadow_relevance=" << *d.shadow_relevance;
      parts.push_back(ss.str());
    }
    for (const auto& w : d.warnings) parts.push_back(w);
  }
  std::string s;
  for (std::size_t k = 0; k < parts.size(); ++k) s += (k ? "; " : "") + parts[k];
  return s;
}

json result_json(const EstimateOutcome& o) {
  json j;
  j["method"] = std::string(method_name(o.method));
  j["ok"] = o.ok();
  j["error"] = o.error;
  if (!o.result) return j;
  const auto& r = *o.result;
  auto number = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  j["mu_hat"] = number(r.mu_hat);
  j["se_mu"] = number(r.se_mu);
  j["ci_mu"] = {number(r.ci_mu.low), number(r.ci_mu.high)};
  if (r.gamma_hat) {
    j["gamma_hat"] = number(*r.gamma_hat);
    j["se_gamma"] = r.se_gamma ? number(*r.se_gamma) : json(nullptr);
    j["ci_gamma"] = r.ci_gamma ? json{number(r.ci_gamma->low), number(r.ci_gamma->high)} : json(nullptr);
  }
  json params = json::object();
  for (std::size_t k = 0; k < r.param_names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double var = r.cov.rows() > i ? r.cov(i, i) : std::nan("");
    params[r.param_names[k]] = {{"estimate", number(r.theta[i])}, {"se", number(std::sqrt(var))}};
  }
  j["parameters"] = params;
  j["converged"] = r.converged;
  j["iterations"] = r.solver.iterations;
  j["diagnostics"] = diagnostics_text(o);
  return j;
}

}  // namespace

void write_results_csv(const std::vector<EstimateOutcome>& outcomes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_csv_row(out, {"method", "mu_hat", "mu_ci_low", "mu_ci_high", "gamma_hat", "gamma_ci_low", "gamma_ci_high",
                      "diagnostics"});
  for (const auto& o : outcomes) {
    std::vector<std::string> row{std::string(method_name(o.method))};
    if (o.result) {
      const auto& r = *o.result;
      row.push_back(num(r.mu_hat));
      row.push_back(num(r.ci_mu.low));
      row.push_back(num(r.ci_mu.high));
      row.push_back(r.gamma_hat ? num(*r.gamma_hat) : "NA");
      row.push_back(r.ci_gamma ? num(r.ci_gamma->low) : "NA");
      row.push_back(r.ci_gamma ? num(r.ci_gamma->high) : "NA");
    } else {
      row.insert(row.end(), 6, "NA");
    }
    row.push_back(diagnostics_text(o));
    write_csv_row(out, row);
  }
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw Error("cannot write config.json in '" + dir.string() + "'");
  out << cfg.to_json().dump(2) << '\n';
}

int run_estimate(const RunConfig& cfg, std::ostream& log) {
  if (cfg.data_path.empty()) throw ConfigError("estimate needs --data");
  if (cfg.methods.empty()) throw ConfigError("no methods requested");
  RunConfig resolved = cfg;
  if (resolved.columns.covariates.empty()) {
    // Every column that is not the outcome, shadow or indicator.
    const CsvTable table = read_csv(cfg.data_path);
    for (const auto& h : table.header) {
      if (h == cfg.columns.outcome || h == cfg.columns.shadow) continue;
      if (cfg.columns.missing_indicator && h == *cfg.columns.missing_indicator) continue;
      resolved.columns.covariates.push_back(h);
    }
  }
  const ShadowDataset data = ingest_csv(resolved.data_path, resolved.columns);
  data.validate();
  log << "read " << data.size() << " records, " << std::setprecision(4) << 100.0 * data.missing_fraction()
      << "% outcome missing\n";

  const auto outcomes = estimate_all(resolved, data);
  const std::filesystem::path dir = resolved.out_dir;
  write_config_echo(resolved, dir);
  write_results_csv(outcomes, dir / "results.csv");
  json j;
  j["n"] = data.size();
  j["missing_fraction"] = data.missing_fraction();
  j["results"] = json::array();
  bool all_ok = true;
  for (const auto& o : outcomes) {
    j["results"].push_back(result_json(o));
    all_ok = all_ok && o.ok();
    log << std::left << std::setw(7) << method_name(o.method);
    if (o.result) {
      log << " mu=" << std::setprecision(5) << o.result->mu_hat << " [" << o.result->ci_mu.low << ", "
          << o.result->ci_mu.high << "]";
      if (o.result->gamma_hat && o.result->ci_gamma) {
        log << "  gamma=" << *o.result->gamma_hat << " [" << o.result->ci_gamma->low << ", "
            << o.result->ci_gamma->high << "]";
      }
    }
    if (!o.error.empty()) log << "  FAILED: " << o.error;
    log << '\n';
  }
  std::ofstream(dir / "results.json") << j.dump(2) << '\n';
  log << "wrote " << (dir / "results.csv").string() << '\n';
  return all_ok ? kExitOk : kExitEstimation;
}

int run_simulate(const RunConfig& cfg, std::ostream& log) {
  if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  StudyConfig study;
  study.scenarios = cfg.scenarios;
  study.sizes = cfg.sizes;
  study.reps = cfg.reps;
  study.methods = cfg.methods;
  study.seed = cfg.seed;
  study.truth = cfg.truth;
  study.threads = cfg.threads;
  study.options.level = cfg.level;
  study.options.reg_variant = cfg.reg_variant;

  const std::filesystem::path dir = cfg.out_dir;
  write_config_echo(cfg, dir);
  if (cfg.emit_data) {
    for (Scenario s : cfg.scenarios) {
      for (long n : cfg.sizes) {
        const auto sim = generate(ScenarioConfig{s, n, replicate_seed(cfg.seed, s, n, 0), cfg.truth});
        write_dataset_csv(sim.observed, dir / ("data_" + std::string(scenario_name(s)) + "_" + std::to_string(n) + ".csv"),
                          &sim.y_full);
      }
    }
  }
  const MCReport report = run_study(study);
  export_report(report, dir);
  log << std::left << std::setw(9) << "cell" << std::setw(7) << "method" << std::right << std::setw(10) << "bias"
      << std::setw(10) << "sd" << std::setw(10) << "cov_mu" << std::setw(10) << "cov_gam" << std::setw(8)
      << "failed" << '\n';
  for (const auto& c : report.cells) {
    const std::string cell = std::string(scenario_name(c.scenario)) + "/" + std::to_string(c.n);
    log << std::left << std::setw(9) << cell << std::setw(7) << method_name(c.method) << std::right << std::fixed
        << std::setprecision(4) << std::setw(10) << c.bias_mu << std::setw(10) << c.sd_mu << std::setw(10)
        << std::setprecision(3) << c.coverage_mu << std::setw(10);
    if (c.has_gamma) log << c.coverage_gamma;
    else log << "-";
    log << std::setw(8) << c.nonconverged << '\n' << std::defaultfloat;
  }
  log << "wrote " << (dir / "coverage_table.csv").string() << '\n';
  return kExitOk;
}

int run_identify_binary(const RunConfig& cfg, std::ostream& out) {
  if (cfg.binary_r1.size() != 4 || cfg.binary_r0.size() != 2) {
    throw ConfigError("identify-binary needs --r1 with 4 values (z0y0,z0y1,z1y0,z1y1) and --r0 with 2 (z0,z1)");
  }
  const auto& a = cfg.binary_r1;
  const auto& b = cfg.binary_r0;
  double total = 0.0;
  for (double v : a) total += v;
  for (double v : b) total += v;
  BinaryObservables obs;
  json j;
  if (std::abs(total - 1.0) <= 1e-10) {
    obs.p_zy_r1 = {{{a[0], a[1]}, {a[2], a[3]}}};
    obs.p_z_r0 = {b[0], b[1]};
    j["input"] = "probabilities";
  } else {
    obs = BinaryObservables::from_counts({{{a[0], a[1]}, {a[2], a[3]}}}, {b[0], b[1]}, &total);
    j["input"] = "counts";
    j["total"] = total;
  }
  obs.validate();
  const BinaryJoint sol = solve_binary(obs);
  j["eta"] = {sol.eta[0], sol.eta[1]};
  j["pz"] = sol.pz;
  j["py_r"] = {sol.py_r[0], sol.py_r[1]};
  j["max_cell_residual"] = max_cell_residual(sol, obs);
  if (cfg.grid_step > 0.0) {
    const UniquenessReport rep = check_uniqueness(obs, cfg.grid_step, cfg.grid_tolerance);
    json clusters = json::array();
    for (const auto& c : rep.clusters) {
      clusters.push_back({{"size", c.size}, {"centroid", c.centroid}, {"extent", c.extent()}});
    }
    json roots = json::array();
    for (const auto& r : rep.roots) roots.push_back(r.as_array());
    j["grid"] = {{"step", rep.step}, {"tolerance", rep.tolerance}, {"hits", rep.hits},
                 {"unique", rep.unique}, {"clusters", clusters}, {"roots", roots}};
  }
  out << j.dump(2) << '\n';
  if (!cfg.out_dir.empty()) {
    write_config_echo(cfg, cfg.out_dir);
    std::ofstream(std::filesystem::path(cfg.out_dir) / "identification.json") << j.dump(2) << '\n';
  }
  return kExitOk;
}

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shadow-variable estimation of an outcome mean missing not at random"};
  app.require_subcommand(1);
  std::string config_path;

  std::string data, outcome, shadow, covariates, indicator, na_token, prop_f, out_f, shadow_f, h_f, methods,
      reg_variant, scenario, sizes, r1, r0, out_dir;
  long n = 0;
  int reps = 0;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  double level = 0.0, gamma = 0.0, step = 0.0, tol = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config; flags override its values");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Master seed");
  };

  CLI::App* est = app.add_subcommand("estimate", "Estimate the outcome mean from a CSV file");
  add_common(est);
  est->add_option("--data", data, "Input CSV (header required)");
  est->add_option("--outcome", outcome, "Outcome column (may contain missing entries)");
  est->add_option("--shadow", shadow, "Shadow variable column (fully observed)");
  est->add_option("--covariates", covariates, "Comma-separated covariate columns (default: all others)");
  est->add_option("--missing-indicator", indicator, "0/1 response column; overrides outcome sentinels");
  est->add_option("--na-token", na_token, "Outcome text treated as missing besides the empty field");
  est->add_option("--propensity", prop_f, "Baseline propensity design, e.g. '1 + x + x^2'");
  est->add_option("--outcome-model", out_f, "Responder outcome design");
  est->add_option("--shadow-model", shadow_f, "Design for the shadow variable given y");
  est->add_option("--instrument", h_f, "Instrument function, e.g. '1 + x + z'");
  est->add_option("--methods", methods, "Comma-separated subset of dr,reg,ipw,cmp,maripw");
  est->add_option("--reg-variant", reg_variant, "REG responder term: model or observed");
  est->add_option("--level", level, "Confidence level");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study of the normal-outcome scenarios");
  add_common(sim);
  sim->add_option("--scenario", scenario, "FT, TF, TT, FF, a comma list, or all");
  auto* n_opt = sim->add_option("--n", n, "Sample size");
  sim->add_option("--sizes", sizes, "Comma-separated sample sizes")->excludes(n_opt);
  sim->add_option("--reps", reps, "Replicates per cell");
  sim->add_option("--methods", methods, "Comma-separated subset of dr,ipw,reg,cmp,maripw");
  sim->add_option("--reg-variant", reg_variant, "REG responder term: model or observed");
  sim->add_option("--threads", threads, "Worker threads (0 = all cores)");
  sim->add_option("--gamma", gamma, "True log odds ratio parameter");
  sim->add_option("--level", level, "Confidence level");
  sim->add_flag("--emit-data", "Also write the first replicate of each cell as CSV");

  CLI::App* bin = app.add_subcommand("identify-binary", "Recover a binary joint law from observed cells");
  add_common(bin);
  bin->add_option("--r1", r1, "P or counts of (z,y,r=1) cells: z0y0,z0y1,z1y0,z1y1");
  bin->add_option("--r0", r0, "P or counts of (z,r=0) cells: z0,z1");
  bin->add_option("--grid", step, "Grid step of the uniqueness scan (0 disables)");
  bin->add_option("--grid-tolerance", tol, "Residual tolerance of the scan (default: the step)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunConfig cfg;
    bool config_has_methods = false;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config '" + config_path + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in '" + config_path + "': " + e.what());
      }
      cfg = RunConfig::from_json(j);
      config_has_methods = j.contains("methods");
    }
    cfg.command = sub->get_name();
    auto given = [&](const char* name) {
      const CLI::Option* o = sub->get_option_no_throw(name);
      return o != nullptr && o->count() > 0;
    };
    if (cfg.command == "simulate" && !given("--methods") && !config_has_methods) {
      cfg.methods = {Method::kDR, Method::kIPW, Method::kREG};
    }
    if (given("--out")) cfg.out_dir = out_dir;
    if (given("--seed")) cfg.seed = seed;
    if (given("--data")) cfg.data_path = data;
    if (given("--outcome")) cfg.columns.outcome = outcome;
    if (given("--shadow")) cfg.columns.shadow = shadow;
    if (given("--covariates")) cfg.columns.covariates = split_list(covariates);
    if (given("--missing-indicator")) cfg.columns.missing_indicator = indicator;
    if (given("--na-token")) cfg.columns.na_token = na_token;
    if (given("--propensity")) cfg.propensity_formula = prop_f;
    if (given("--outcome-model")) cfg.outcome_formula = out_f;
    if (given("--shadow-model")) cfg.shadow_formula = shadow_f;
    if (given("--instrument")) cfg.h_formula = h_f;
    if (given("--methods")) cfg.methods = parse_method_list(methods);
    if (given("--reg-variant")) {
      if (reg_variant == "model") cfg.reg_variant = RegVariant::kModelMean;
      else if (reg_variant == "observed") cfg.reg_variant = RegVariant::kObservedOutcome;
      else throw ConfigError("--reg-variant must be 'model' or 'observed'");
    }
    if (given("--level")) cfg.level = level;
    if (given("--scenario")) cfg.scenarios = parse_scenarios(scenario);
    if (given("--n")) cfg.sizes = {n};
    if (given("--sizes")) cfg.sizes = parse_sizes(sizes);
    if (given("--reps")) cfg.reps = reps;
    if (given("--threads")) cfg.threads = threads;
    if (given("--gamma")) cfg.truth.gamma = gamma;
    if (given("--emit-data")) cfg.emit_data = true;
    if (given("--r1")) cfg.binary_r1 = parse_numbers(r1, 4, "--r1");
    if (given("--r0")) cfg.binary_r0 = parse_numbers(r0, 2, "--r0");
    if (given("--grid")) cfg.grid_step = step;
    if (given("--grid-tolerance")) cfg.grid_tolerance = tol;
    if (cfg.command == "identify-binary" && !given("--out") && config_path.empty()) cfg.out_dir.clear();

    if (cfg.command == "estimate") {
      if (cfg.columns.outcome.empty()) throw ConfigError("estimate needs --outcome");
      if (cfg.columns.shadow.empty()) throw ConfigError("estimate needs --shadow");
      return run_estimate(cfg, out);
    }
    if (cfg.command == "simulate") return run_simulate(cfg, out);
    return run_identify_binary(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InfeasibleError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EstimationError& e) {
    err << "estimation error: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitEstimation;
  }
}

}  // namespace shadow
