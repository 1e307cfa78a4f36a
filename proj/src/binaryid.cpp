#include "shadowmnar/binaryid.hpp"

#include "shadowmnar/errors.hpp"
#include "shadowmnar/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace shadow {

void BinaryObservables::validate() const {
  for (const auto& row : p_zy_r1) {
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("binary observables must be non-negative");
    }
  }
  for (double p : p_z_r0) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("binary observables must be non-negative");
  }
  if (std::abs(total() - 1.0) > 1e-10) {
    throw DataError("binary observables must sum to 1 (got " + std::to_string(total()) + ")");
  }
}

double BinaryObservables::total() const {
  return p_zy_r1[0][0] + p_zy_r1[0][1] + p_zy_r1[1][0] + p_zy_r1[1][1] + p_z_r0[0] + p_z_r0[1];
}

BinaryObservables BinaryObservables::from_counts(const std::array<std::array<double, 2>, 2>& n_zy_r1,
                                                 const std::array<double, 2>& n_z_r0, double* total) {
  BinaryObservables counts{n_zy_r1, n_z_r0};
  const double sum = counts.total();
  if (!(sum > 0.0)) throw DataError("cell counts must have a positive total");
  BinaryObservables out;
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) out.p_zy_r1[z][y] = n_zy_r1[z][y] / sum;
    out.p_z_r0[z] = n_z_r0[z] / sum;
  }
  if (total) *total = sum;
  return out;
}

BinaryObservables forward(const BinaryJoint& j) {
  BinaryObservables out;
  for (int z = 0; z < 2; ++z) {
    const double pz = z ? j.pz : 1.0 - j.pz;
    const double py1 = j.eta[z];
    const std::array<double, 2> py{1.0 - py1, py1};
    out.p_zy_r1[z][0] = j.py_r[0] * py[0] * pz;
    out.p_zy_r1[z][1] = j.py_r[1] * py[1] * pz;
    out.p_z_r0[z] = ((1.0 - j.py_r[0]) * py[0] + (1.0 - j.py_r[1]) * py[1]) * pz;
  }
  return out;
}

double max_cell_residual(const BinaryJoint& joint, const BinaryObservables& obs) {
  const BinaryObservables f = forward(joint);
  double worst = 0.0;
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) worst = std::max(worst, std::abs(f.p_zy_r1[z][y] - obs.p_zy_r1[z][y]));
    worst = std::max(worst, std::abs(f.p_z_r0[z] - obs.p_z_r0[z]));
  }
  return worst;
}

namespace {

BinaryJoint from_vector(const Eigen::VectorXd& v) { return {{v[0], v[1]}, v[2], {v[3], v[4]}}; }

}  // namespace

namespace {

// The four responder cells plus P(z = 1, r = 0); the sixth cell follows
// from the unit total.
MomentSystem binary_system(const BinaryObservables& obs) {
  MomentSystem sys;
  sys.param_dim = 5;
  sys.moment_dim = 5;
  sys.records = 1;
  sys.eval = [&obs](Eigen::Index, const Eigen::VectorXd& theta, Eigen::Ref<Eigen::VectorXd> out) {
    const BinaryObservables f = forward(from_vector(theta));
    out << f.p_zy_r1[0][0] - obs.p_zy_r1[0][0], f.p_zy_r1[0][1] - obs.p_zy_r1[0][1],
        f.p_zy_r1[1][0] - obs.p_zy_r1[1][0], f.p_zy_r1[1][1] - obs.p_zy_r1[1][1], f.p_z_r0[1] - obs.p_z_r0[1];
  };
  return sys;
}

// Exact root in the unit box reached by Newton from `start`, if any.
std::optional<BinaryJoint> polish(const MomentSystem& sys, const BinaryObservables& obs, const Eigen::VectorXd& start) {
  SolverOptions options;
  options.root_tolerance = 1e-14;
  options.max_iterations = 200;
  SolveReport report;
  try {
    report = solve_moments(sys, start, options);
  } catch (const SingularJacobianError&) {
    return std::nullopt;
  }
  const Eigen::VectorXd& t = report.theta_hat;
  if (report.final_residual_norm > 1e-12) return std::nullopt;
  if ((t.array() < -1e-9).any() || (t.array() > 1.0 + 1e-9).any()) return std::nullopt;
  const BinaryJoint root = from_vector(t.cwiseMax(0.0).cwiseMin(1.0));
  if (max_cell_residual(root, obs) > 1e-12) return std::nullopt;
  return root;
}

}  // namespace

BinaryJoint solve_binary(const BinaryObservables& obs, double relevance_tolerance) {
  obs.validate();
  const MomentSystem sys = binary_system(obs);

  // P(z = 1) is observed directly. The Jacobian is singular wherever
  // eta0 == eta1, so eta starts apart, ordered as among responders; the
  // 3 x 3 lattice covers the response probabilities.
  const double pz_obs = obs.p_zy_r1[1][0] + obs.p_zy_r1[1][1] + obs.p_z_r0[1];
  auto responder_eta = [&obs](int z) {
    const double m = obs.p_zy_r1[z][0] + obs.p_zy_r1[z][1];
    return m > 0.0 ? obs.p_zy_r1[z][1] / m : 0.5;
  };
  const bool rising = responder_eta(1) >= responder_eta(0);
  std::vector<Eigen::VectorXd> starts;
  for (double q0 : {0.1, 0.5, 0.9}) {
    for (double q1 : {0.1, 0.5, 0.9}) {
      Eigen::VectorXd s(5);
      s << (rising ? 0.3 : 0.7), (rising ? 0.7 : 0.3), pz_obs, q0, q1;
      starts.push_back(s);
    }
  }

  std::optional<BinaryJoint> best;
  double best_residual = std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    const auto candidate = polish(sys, obs, start);
    if (!candidate) continue;
    const double residual = max_cell_residual(*candidate, obs);
    if (residual < best_residual) {
      best_residual = residual;
      best = candidate;
    }
  }

  // Cross-product of responder cells is q0 q1 P(z=0) P(z=1) (eta1 - eta0).
  const double cross = obs.p_zy_r1[0][0] * obs.p_zy_r1[1][1] - obs.p_zy_r1[0][1] * obs.p_zy_r1[1][0];
  if (!best) {
    if (std::abs(cross) <= 1e-12) {
      throw NonIdentifiedError("shadow variable is unrelated to the outcome: eta0 == eta1");
    }
    throw InfeasibleError("no parameter vector in the unit box reproduces the observables");
  }
  if (std::abs(best->eta[1] - best->eta[0]) < relevance_tolerance) {
    throw NonIdentifiedError("shadow variable is unrelated to the outcome: |eta1 - eta0| < " +
                             std::to_string(relevance_tolerance));
  }
  return *best;
}

double GridCluster::extent() const {
  double out = 0.0;
  for (int k = 0; k < 5; ++k) out = std::max(out, upper[k] - lower[k]);
  return out;
}

namespace {

using GridPoint = std::array<int, 5>;

std::uint64_t pack(const GridPoint& g) {
  std::uint64_t key = 0;
  for (int v : g) key = key * 1024u + static_cast<std::uint64_t>(v + 1);
  return key;
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

UniquenessReport check_uniqueness(const BinaryObservables& obs, double step, std::optional<double> tolerance) {
  if (!(step > 0.0 && step <= 0.5)) throw ConfigError("grid step must lie in (0, 0.5]");
  if (!tolerance) {
    // Half a step keeps the hit cloud tight; a coarser grid point may miss
    // it, in which case the full step is used.
    UniquenessReport half = check_uniqueness(obs, step, 0.5 * step);
    return half.hits > 0 ? half : check_uniqueness(obs, step, step);
  }
  UniquenessReport report;
  report.step = step;
  report.tolerance = *tolerance;
  const double tol = report.tolerance;
  const int last = static_cast<int>(std::lround(1.0 / step));
  if (last > 1000) throw ConfigError("grid step too fine for the exhaustive scan");
  auto value = [&](int k) { return std::min(1.0, k * step); };

  // Cells for z depend on (pz, q0, q1, eta_z) only, so each eta is scanned
  // separately for every (pz, q0, q1); the hit set equals the full scan's.
  auto fits = [&](int z, double pz_z, double q0, double q1, double eta) {
    const double p0 = q0 * (1.0 - eta) * pz_z;
    const double p1 = q1 * eta * pz_z;
    const double r0 = ((1.0 - q0) * (1.0 - eta) + (1.0 - q1) * eta) * pz_z;
    return std::abs(p0 - obs.p_zy_r1[z][0]) <= tol && std::abs(p1 - obs.p_zy_r1[z][1]) <= tol &&
           std::abs(r0 - obs.p_z_r0[z]) <= tol;
  };
  const double obs_z1 = obs.p_zy_r1[1][0] + obs.p_zy_r1[1][1] + obs.p_z_r0[1];

  std::vector<GridPoint> hits;
  std::vector<int> eta0_ok;
  std::vector<int> eta1_ok;
  for (int ip = 0; ip <= last; ++ip) {
    const double pz = value(ip);
    // The three z = 1 residuals sum to pz - P(z = 1).
    if (std::abs(pz - obs_z1) > 3.0 * tol) continue;
    for (int iq0 = 0; iq0 <= last; ++iq0) {
      for (int iq1 = 0; iq1 <= last; ++iq1) {
        const double q0 = value(iq0);
        const double q1 = value(iq1);
        eta0_ok.clear();
        eta1_ok.clear();
        for (int ie = 0; ie <= last; ++ie) {
          if (fits(0, 1.0 - pz, q0, q1, value(ie))) eta0_ok.push_back(ie);
          if (fits(1, pz, q0, q1, value(ie))) eta1_ok.push_back(ie);
        }
        for (int e0 : eta0_ok) {
          for (int e1 : eta1_ok) hits.push_back({e0, e1, ip, iq0, iq1});
        }
      }
    }
  }
  report.hits = hits.size();

  std::unordered_map<std::uint64_t, std::size_t> index;
  for (std::size_t k = 0; k < hits.size(); ++k) index.emplace(pack(hits[k]), k);
  DisjointSets sets(hits.size());
  for (std::size_t k = 0; k < hits.size(); ++k) {
    for (int code = 0; code < 243; ++code) {
      GridPoint nb = hits[k];
      int c = code;
      for (int d = 0; d < 5; ++d, c /= 3) nb[d] += c % 3 - 1;
      if (nb == hits[k]) continue;
      const auto it = index.find(pack(nb));
      if (it != index.end()) sets.unite(k, it->second);
    }
  }

  std::unordered_map<std::size_t, std::size_t> cluster_of;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const std::size_t root = sets.find(k);
    auto [it, inserted] = cluster_of.emplace(root, report.clusters.size());
    if (inserted) {
      GridCluster c;
      c.lower.fill(1.0);
      c.upper.fill(0.0);
      report.clusters.push_back(c);
    }
    GridCluster& c = report.clusters[it->second];
    ++c.size;
    for (int d = 0; d < 5; ++d) {
      const double v = value(hits[k][d]);
      c.centroid[d] += v;
      c.lower[d] = std::min(c.lower[d], v);
      c.upper[d] = std::max(c.upper[d], v);
    }
  }
  for (auto& c : report.clusters) {
    for (double& v : c.centroid) v /= static_cast<double>(c.size);
  }

  // Refine from up to kSamples evenly spaced hits of every cluster and
  // merge roots closer than 1e-6.
  constexpr std::size_t kSamples = 25;
  std::vector<std::vector<std::size_t>> members(report.clusters.size());
  for (std::size_t k = 0; k < hits.size(); ++k) members[cluster_of.at(sets.find(k))].push_back(k);
  const MomentSystem sys = binary_system(obs);
  for (const auto& m : members) {
    const std::size_t stride = std::max<std::size_t>(1, m.size() / kSamples);
    for (std::size_t s = 0; s < m.size(); s += stride) {
      Eigen::VectorXd start(5);
      for (int d = 0; d < 5; ++d) start[d] = value(hits[m[s]][d]);
      const auto root = polish(sys, obs, start);
      if (!root) continue;
      const auto a = root->as_array();
      const bool seen = std::any_of(report.roots.begin(), report.roots.end(), [&](const BinaryJoint& r) {
        const auto b = r.as_array();
        for (int d = 0; d < 5; ++d) {
          if (std::abs(a[d] - b[d]) > 1e-6) return false;
        }
        return true;
      });
      if (!seen) report.roots.push_back(*root);
    }
  }
  report.unique = report.roots.size() == 1;
  return report;
}

}  // namespace shadow
