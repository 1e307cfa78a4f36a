#include "shadowmnar/binaryid.hpp"
#include "shadowmnar/errors.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace shadow;
using Catch::Matchers::WithinAbs;

namespace {

// Observables written out cell by cell from the joint law.
BinaryObservables by_hand(double eta0, double eta1, double pz, double p0, double p1) {
  const double pzv[2] = {1.0 - pz, pz};
  const double eta[2] = {eta0, eta1};
  const double pr[2] = {p0, p1};
  BinaryObservables o;
  for (int z = 0; z < 2; ++z) {
    const double py[2] = {1.0 - eta[z], eta[z]};
    o.p_z_r0[z] = 0.0;
    for (int y = 0; y < 2; ++y) {
      o.p_zy_r1[z][y] = pr[y] * py[y] * pzv[z];
      o.p_z_r0[z] += (1.0 - pr[y]) * py[y] * pzv[z];
    }
  }
  return o;
}

double max_diff(const BinaryObservables& a, const BinaryObservables& b) {
  double m = 0.0;
  for (int z = 0; z < 2; ++z) {
    m = std::max(m, std::abs(a.p_z_r0[z] - b.p_z_r0[z]));
    for (int y = 0; y < 2; ++y) m = std::max(m, std::abs(a.p_zy_r1[z][y] - b.p_zy_r1[z][y]));
  }
  return m;
}

}  // namespace

TEST_CASE("forward map matches the cell formulas") {
  const auto obs = forward(BinaryJoint{{0.3, 0.7}, 0.5, {0.9, 0.6}});
  CHECK(max_diff(obs, by_hand(0.3, 0.7, 0.5, 0.9, 0.6)) <= 1e-15);
  CHECK_THAT(obs.total(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("recovers the reference truth") {
  const auto sol = solve_binary(by_hand(0.3, 0.7, 0.5, 0.9, 0.6));
  CHECK_THAT(sol.eta[0], WithinAbs(0.3, 1e-10));
  CHECK_THAT(sol.eta[1], WithinAbs(0.7, 1e-10));
  CHECK_THAT(sol.pz, WithinAbs(0.5, 1e-10));
  CHECK_THAT(sol.py_r[0], WithinAbs(0.9, 1e-10));
  CHECK_THAT(sol.py_r[1], WithinAbs(0.6, 1e-10));
}

TEST_CASE("MCAR truth") {
  const auto obs = by_hand(0.2, 0.65, 0.4, 0.8, 0.8);
  const auto sol = solve_binary(obs);
  CHECK_THAT(sol.py_r[0], WithinAbs(sol.py_r[1], 1e-10));
  CHECK_THAT(sol.py_r[0], WithinAbs(0.8, 1e-10));
  // P(z, y | r = 1) equals P(z, y).
  const double pzv[2] = {0.6, 0.4};
  const double eta[2] = {0.2, 0.65};
  for (int z = 0; z < 2; ++z) {
    CHECK_THAT(obs.p_zy_r1[z][1] / 0.8, WithinAbs(eta[z] * pzv[z], 1e-14));
    CHECK_THAT(obs.p_zy_r1[z][0] / 0.8, WithinAbs((1 - eta[z]) * pzv[z], 1e-14));
  }
}

TEST_CASE("irrelevant shadow is not identified") {
  CHECK_THROWS_AS(solve_binary(by_hand(0.5, 0.5, 0.5, 0.9, 0.6)), NonIdentifiedError);
  CHECK_THROWS_AS(solve_binary(by_hand(0.3, 0.3, 0.7, 0.4, 0.8)), NonIdentifiedError);
}

TEST_CASE("infeasible observables") {
  BinaryObservables o;
  o.p_zy_r1 = {{{0.2, 0.1}, {0.1, 0.2}}};
  o.p_z_r0 = {0.3, 0.1};
  CHECK_THROWS_AS(solve_binary(o), InfeasibleError);
}

TEST_CASE("observable validation and counts") {
  BinaryObservables bad;
  bad.p_zy_r1 = {{{0.2, 0.2}, {0.2, 0.2}}};
  bad.p_z_r0 = {0.1, 0.2};
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad.p_z_r0 = {0.3, -0.1};
  CHECK_THROWS_AS(bad.validate(), DataError);
  double total = 0.0;
  const auto obs = BinaryObservables::from_counts({{{27, 9}, {7.5, 21}}}, {25.5, 10}, &total);
  CHECK(total == 100.0);
  CHECK_THAT(obs.p_zy_r1[0][0], WithinAbs(0.27, 1e-15));
  CHECK_THAT(obs.total(), WithinAbs(1.0, 1e-15));
  obs.validate();
}

TEST_CASE("round trip over random feasible truths") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  int done = 0;
  while (done < 1000) {
    const BinaryJoint truth{{u(rng), u(rng)}, u(rng), {u(rng), u(rng)}};
    if (std::abs(truth.eta[1] - truth.eta[0]) < 0.05) continue;
    ++done;
    const auto obs = forward(truth);
    const auto sol = solve_binary(obs);
    INFO("truth " << truth.eta[0] << " " << truth.eta[1] << " " << truth.pz << " " << truth.py_r[0] << " "
                  << truth.py_r[1]);
    CHECK(max_diff(forward(sol), obs) <= 1e-10);
    const auto a = sol.as_array(), b = truth.as_array();
    for (int k = 0; k < 5; ++k) CHECK_THAT(a[k], WithinAbs(b[k], 1e-10));
  }
}

TEST_CASE("relabeling the shadow variable permutes the solution") {
  const auto obs = by_hand(0.25, 0.6, 0.35, 0.7, 0.45);
  BinaryObservables flipped;
  for (int z = 0; z < 2; ++z) {
    flipped.p_z_r0[z] = obs.p_z_r0[1 - z];
    flipped.p_zy_r1[z] = obs.p_zy_r1[1 - z];
  }
  const auto a = solve_binary(obs);
  const auto b = solve_binary(flipped);
  CHECK_THAT(b.eta[0], WithinAbs(a.eta[1], 1e-10));
  CHECK_THAT(b.eta[1], WithinAbs(a.eta[0], 1e-10));
  CHECK_THAT(b.pz, WithinAbs(1.0 - a.pz, 1e-10));
  CHECK_THAT(b.py_r[0], WithinAbs(a.py_r[0], 1e-10));
  CHECK_THAT(b.py_r[1], WithinAbs(a.py_r[1], 1e-10));
}

TEST_CASE("grid scan finds a single cluster at the truth") {
  const auto rep = check_uniqueness(by_hand(0.3, 0.7, 0.5, 0.9, 0.6), 0.01);
  REQUIRE(rep.hits > 0);
  CHECK(rep.clusters.size() == 1);
  CHECK(rep.unique);
  const double truth[5] = {0.3, 0.7, 0.5, 0.9, 0.6};
  for (int k = 0; k < 5; ++k) {
    CHECK(rep.clusters[0].lower[k] <= truth[k] + 1e-9);
    CHECK(rep.clusters[0].upper[k] >= truth[k] - 1e-9);
    CHECK_THAT(rep.clusters[0].centroid[k], WithinAbs(truth[k], 0.05));
  }
  REQUIRE(rep.roots.size() == 1);
  const auto root = rep.roots[0].as_array();
  for (int k = 0; k < 5; ++k) CHECK_THAT(root[k], WithinAbs(truth[k], 1e-10));
}

TEST_CASE("grid scan refines to a single root for random identifiable truths") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  int done = 0;
  while (done < 60) {
    const BinaryJoint truth{{u(rng), u(rng)}, u(rng), {u(rng), u(rng)}};
    if (std::abs(truth.eta[1] - truth.eta[0]) < 0.05) continue;
    ++done;
    const auto rep = check_uniqueness(forward(truth));
    INFO("truth " << truth.eta[0] << " " << truth.eta[1] << " " << truth.pz << " " << truth.py_r[0] << " "
                  << truth.py_r[1] << "; clusters " << rep.clusters.size());
    REQUIRE(rep.unique);
    const auto a = rep.roots[0].as_array(), b = truth.as_array();
    for (int k = 0; k < 5; ++k) CHECK_THAT(a[k], WithinAbs(b[k], 1e-10));
  }
}

TEST_CASE("grid scan exhibits non-uniqueness for an irrelevant shadow") {
  const auto rep = check_uniqueness(by_hand(0.5, 0.5, 0.5, 0.9, 0.6), 0.01);
  CHECK_FALSE(rep.unique);
  CHECK(rep.roots.size() != 1);
  CHECK((rep.clusters.size() > 1 || (rep.clusters.size() == 1 && rep.clusters[0].extent() > 0.1)));
}

TEST_CASE("zero tolerance keeps only exact grid hits") {
  const auto obs = by_hand(0.3, 0.7, 0.5, 0.9, 0.6);
  const auto loose = check_uniqueness(obs, 0.02);
  const auto exact = check_uniqueness(obs, 0.02, 0.0);
  CHECK(exact.tolerance == 0.0);
  CHECK(exact.hits <= loose.hits);
  CHECK(exact.hits <= 1);
  const auto off_grid = check_uniqueness(by_hand(0.3137, 0.7071, 0.5, 0.9, 0.6), 0.02, 0.0);
  CHECK(off_grid.hits == 0);
  CHECK(off_grid.clusters.empty());
  CHECK_FALSE(off_grid.unique);
}
