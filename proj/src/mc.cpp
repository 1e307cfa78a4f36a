#include "shadowmnar/mc.hpp"

#include "shadowmnar/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace shadow {

const CellSummary* MCReport::find(Scenario s, long n, Method m) const {
  for (const auto& c : cells) {
    if (c.scenario == s && c.n == n && c.method == m) return &c;
  }
  return nullptr;
}

std::uint64_t replicate_seed(std::uint64_t master, Scenario s, long n, int replicate) {
  std::uint64_t v = mix_seed(master, static_cast<std::uint64_t>(s) + 1);
  v = mix_seed(v, static_cast<std::uint64_t>(n));
  return mix_seed(v, static_cast<std::uint64_t>(replicate));
}

namespace {

struct Task {
  Scenario scenario;
  long n;
  int replicate;
};

std::vector<ReplicateRecord> run_task(const StudyConfig& cfg, const Task& task, const ModelSpec& analysis) {
  ScenarioConfig sc{task.scenario, task.n, replicate_seed(cfg.seed, task.scenario, task.n, task.replicate), cfg.truth};
  const SimulatedDataset sim = generate(sc);
  const double full_mean = sim.y_full.mean();

  std::vector<ReplicateRecord> out;
  for (Method m : cfg.methods) {
    ReplicateRecord rec;
    rec.scenario = task.scenario;
    rec.n = task.n;
    rec.method = m;
    rec.replicate = task.replicate;
    rec.seed = sc.seed;
    rec.full_data_mean = full_mean;
    try {
      const EstimationResult res = estimate(m, sim.observed, analysis, cfg.options);
      rec.converged = res.converged && std::isfinite(res.mu_hat) && std::isfinite(res.se_mu);
      if (!res.converged) rec.error = res.solver.message.empty() ? "solver did not converge" : res.solver.message;
      rec.mu_hat = res.mu_hat;
      rec.se_mu = res.se_mu;
      rec.ci_mu = res.ci_mu;
      rec.gamma_hat = res.gamma_hat;
      rec.se_gamma = res.se_gamma;
      rec.ci_gamma = res.ci_gamma;
    } catch (const std::exception& e) {
      rec.converged = false;
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

double binomial_se(double c, int reps) { return reps > 0 ? std::sqrt(c * (1.0 - c) / reps) : 0.0; }

CellSummary summarize(Scenario s, long n, Method m, const std::vector<const ReplicateRecord*>& recs,
                      double mu_true, double gamma_true) {
  CellSummary c;
  c.scenario = s;
  c.n = n;
  c.method = m;
  c.replications = static_cast<int>(recs.size());
  c.true_mu = mu_true;
  c.true_gamma = gamma_true;
  c.has_gamma = m == Method::kDR || m == Method::kIPW || m == Method::kREG;

  double sum = 0, sum_sq = 0, sum_se = 0, cover = 0, length = 0;
  double g_sum = 0, g_sq = 0, g_se = 0, g_cover = 0;
  int g_count = 0;
  for (const ReplicateRecord* r : recs) {
    if (!r->converged) {
      ++c.nonconverged;
      continue;
    }
    ++c.converged;
    sum += r->mu_hat;
    sum_sq += r->mu_hat * r->mu_hat;
    sum_se += r->se_mu;
    cover += r->ci_mu.contains(mu_true) ? 1.0 : 0.0;
    length += r->ci_mu.length();
    if (r->gamma_hat && r->ci_gamma) {
      ++g_count;
      g_sum += *r->gamma_hat;
      g_sq += *r->gamma_hat * *r->gamma_hat;
      g_se += r->se_gamma.value_or(0.0);
      g_cover += r->ci_gamma->contains(gamma_true) ? 1.0 : 0.0;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double k = c.converged;
  if (c.converged > 0) {
    c.mean_mu = sum / k;
    c.bias_mu = c.mean_mu - mu_true;
    c.mean_se_mu = sum_se / k;
    c.coverage_mu = cover / k;
    c.ci_length_mu = length / k;
  } else {
    c.mean_mu = c.bias_mu = c.mean_se_mu = c.coverage_mu = c.ci_length_mu = nan;
  }
  c.sd_mu = c.converged >= 2 ? std::sqrt(std::max(0.0, (sum_sq - k * c.mean_mu * c.mean_mu) / (k - 1))) : nan;
  c.mc_se_mu = c.converged >= 2 ? c.sd_mu / std::sqrt(k) : nan;
  c.coverage_mu_se = binomial_se(c.coverage_mu, c.converged);

  if (c.has_gamma && g_count > 0) {
    const double kg = g_count;
    c.mean_gamma = g_sum / kg;
    c.mean_se_gamma = g_se / kg;
    c.coverage_gamma = g_cover / kg;
    c.sd_gamma = g_count >= 2 ? std::sqrt(std::max(0.0, (g_sq - kg * c.mean_gamma * c.mean_gamma) / (kg - 1))) : nan;
    c.coverage_gamma_se = binomial_se(c.coverage_gamma, g_count);
  } else if (c.has_gamma) {
    c.mean_gamma = c.sd_gamma = c.mean_se_gamma = c.coverage_gamma = c.coverage_gamma_se = nan;
  }
  return c;
}

}  // namespace

MCReport run_study(const StudyConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
  std::vector<Task> tasks;
  for (Scenario s : cfg.scenarios) {
    for (long n : cfg.sizes) {
      for (int rep = 0; rep < cfg.reps; ++rep) tasks.push_back({s, n, rep});
    }
  }

  const ModelSpec analysis = analysis_model();
  std::vector<std::vector<ReplicateRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) results[k] = run_task(cfg, tasks[k], analysis);
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1)));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  MCReport report;
  report.config = cfg;
  for (auto& batch : results) {
    for (auto& rec : batch) report.replicates.push_back(std::move(rec));
  }
  for (Scenario s : cfg.scenarios) {
    const double mu_true = true_mu(truth_model(s, cfg.truth));
    for (long n : cfg.sizes) {
      for (Method m : cfg.methods) {
        std::vector<const ReplicateRecord*> recs;
        for (const auto& r : report.replicates) {
          if (r.scenario == s && r.n == n && r.method == m) recs.push_back(&r);
        }
        report.cells.push_back(summarize(s, n, m, recs, mu_true, cfg.truth.gamma));
      }
    }
  }
  return report;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

const char* kReplicateHeader =
    "scenario,n,method,replicate,seed,converged,mu_hat,se_mu,mu_ci_low,mu_ci_high,gamma_hat,se_gamma,"
    "gamma_ci_low,gamma_ci_high,full_data_mean,error\n";

void write_replicate(std::ostream& out, const ReplicateRecord& r) {
  out << scenario_name(r.scenario) << ',' << r.n << ',' << method_name(r.method) << ',' << r.replicate << ','
      << r.seed << ',' << (r.converged ? 1 : 0) << ',' << cell(r.mu_hat) << ',' << cell(r.se_mu) << ','
      << cell(r.ci_mu.low) << ',' << cell(r.ci_mu.high) << ',' << cell(r.gamma_hat) << ',' << cell(r.se_gamma)
      << ',' << (r.ci_gamma ? cell(r.ci_gamma->low) : "") << ',' << (r.ci_gamma ? cell(r.ci_gamma->high) : "")
      << ',' << cell(r.full_data_mean) << ',' << (r.error.empty() ? "" : quoted(r.error)) << '\n';
}

}  // namespace

void export_report(const MCReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  const StudyConfig& cfg = report.config;

  std::vector<Method> gamma_methods;
  for (Method m : cfg.methods) {
    if (m == Method::kDR || m == Method::kIPW || m == Method::kREG) gamma_methods.push_back(m);
  }

  {
    const auto path = dir / "coverage_table.csv";
    auto out = open_output(path);
    out << "scenario,n";
    for (Method m : cfg.methods) out << ',' << method_name(m) << "_mu";
    for (Method m : gamma_methods) out << ',' << method_name(m) << "_gamma";
    out << '\n';
    if (!cfg.methods.empty()) {
      for (Scenario s : cfg.scenarios) {
        for (long n : cfg.sizes) {
          out << scenario_name(s) << ',' << n;
          for (Method m : cfg.methods) out << ',' << cell(report.find(s, n, m)->coverage_mu);
          for (Method m : gamma_methods) out << ',' << cell(report.find(s, n, m)->coverage_gamma);
          out << '\n';
        }
      }
    }
    close_output(out, path);
  }

  {
    const auto path = dir / "summary.csv";
    auto out = open_output(path);
    out << "scenario,n,method,replications,converged,nonconverged,true_mu,mean_mu,bias_mu,sd_mu,mc_se_mu,"
           "mean_se_mu,coverage_mu,coverage_mu_se,ci_length_mu,true_gamma,mean_gamma,sd_gamma,mean_se_gamma,"
           "coverage_gamma,coverage_gamma_se\n";
    for (const auto& c : report.cells) {
      out << scenario_name(c.scenario) << ',' << c.n << ',' << method_name(c.method) << ',' << c.replications << ','
          << c.converged << ',' << c.nonconverged << ',' << cell(c.true_mu) << ',' << cell(c.mean_mu) << ','
          << cell(c.bias_mu) << ',' << cell(c.sd_mu) << ',' << cell(c.mc_se_mu) << ',' << cell(c.mean_se_mu) << ','
          << cell(c.coverage_mu) << ',' << cell(c.coverage_mu_se) << ',' << cell(c.ci_length_mu) << ',';
      if (c.has_gamma) {
        out << cell(c.true_gamma) << ',' << cell(c.mean_gamma) << ',' << cell(c.sd_gamma) << ','
            << cell(c.mean_se_gamma) << ',' << cell(c.coverage_gamma) << ',' << cell(c.coverage_gamma_se);
      } else {
        out << ",,,,,";
      }
      out << '\n';
    }
    close_output(out, path);
  }

  {
    const auto path = dir / "estimates.csv";
    auto out = open_output(path);
    out << kReplicateHeader;
    for (const auto& r : report.replicates) write_replicate(out, r);
    close_output(out, path);
  }

  for (Scenario s : cfg.scenarios) {
    for (long n : cfg.sizes) {
      for (Method m : cfg.methods) {
        const auto path = dir / (std::string(scenario_name(s)) + "_" + std::to_string(n) + "_" +
                                 std::string(method_name(m)) + ".csv");
        auto out = open_output(path);
        out << kReplicateHeader;
        for (const auto& r : report.replicates) {
          if (r.scenario == s && r.n == n && r.method == m) write_replicate(out, r);
        }
        close_output(out, path);
      }
    }
  }

  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["reps"] = cfg.reps;
  j["sizes"] = cfg.sizes;
  j["scenarios"] = nlohmann::json::array();
  for (Scenario s : cfg.scenarios) j["scenarios"].push_back(std::string(scenario_name(s)));
  j["methods"] = nlohmann::json::array();
  for (Method m : cfg.methods) j["methods"].push_back(std::string(method_name(m)));
  j["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json e{{"scenario", std::string(scenario_name(c.scenario))},
                     {"n", c.n},
                     {"method", std::string(method_name(c.method))},
                     {"replications", c.replications},
                     {"converged", c.converged},
                     {"nonconverged", c.nonconverged},
                     {"nonconverged_fraction", c.replications ? double(c.nonconverged) / c.replications : 0.0},
                     {"true_mu", number(c.true_mu)},
                     {"mean_mu", number(c.mean_mu)},
                     {"bias_mu", number(c.bias_mu)},
                     {"sd_mu", number(c.sd_mu)},
                     {"sd_defined", c.sd_defined()},
                     {"mean_se_mu", number(c.mean_se_mu)},
                     {"coverage_mu", number(c.coverage_mu)},
                     {"coverage_mu_se", number(c.coverage_mu_se)},
                     {"ci_length_mu", number(c.ci_length_mu)}};
    if (c.has_gamma) {
      e["true_gamma"] = c.true_gamma;
      e["mean_gamma"] = number(c.mean_gamma);
      e["sd_gamma"] = number(c.sd_gamma);
      e["mean_se_gamma"] = number(c.mean_se_gamma);
      e["coverage_gamma"] = number(c.coverage_gamma);
      e["coverage_gamma_se"] = number(c.coverage_gamma_se);
    }
    j["cells"].push_back(std::move(e));
  }
  const auto path = dir / "summary.json";
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  close_output(out, path);
}

}  // namespace shadow
