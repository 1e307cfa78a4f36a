#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace shadow {

/// Observed-data law of binary (Z, Y, R): P(z, y, r = 1) and P(z, r = 0).
struct BinaryObservables {
  std::array<std::array<double, 2>, 2> p_zy_r1{};  // [z][y]
  std::array<double, 2> p_z_r0{};                   // [z]

  /// Throws DataError unless entries are non-negative and sum to 1 within 1e-10.
  void validate() const;
  double total() const;

  /// Normalizes cell counts; `total` receives the count total.
  static BinaryObservables from_counts(const std::array<std::array<double, 2>, 2>& n_zy_r1,
                                       const std::array<double, 2>& n_z_r0, double* total = nullptr);
};

/// Full joint law: P(y = 1 | z) = eta[z], P(z = 1) = pz, P(r = 1 | y) = py_r[y].
/// R depends on (Z, Y) only through Y.
struct BinaryJoint {
  std::array<double, 2> eta{};
  double pz = 0.0;
  std::array<double, 2> py_r{};

  std::array<double, 5> as_array() const { return {eta[0], eta[1], pz, py_r[0], py_r[1]}; }
  static BinaryJoint from_array(const std::array<double, 5>& v) { return {{v[0], v[1]}, v[2], {v[3], v[4]}}; }
};

BinaryObservables forward(const BinaryJoint& joint);

/// Largest absolute difference between forward(joint) and `obs` over the six cells.
double max_cell_residual(const BinaryJoint& joint, const BinaryObservables& obs);

/// Recovers the joint law from the observables by Newton's method with
/// nine lattice starts.
///
/// Throws NonIdentifiedError when the observables are compatible with
/// eta[0] == eta[1] (within `relevance_tolerance`), InfeasibleError when no
/// root lies in the parameter box.
BinaryJoint solve_binary(const BinaryObservables& obs, double relevance_tolerance = 1e-6);

struct GridCluster {
  std::size_t size = 0;
  std::array<double, 5> centroid{};
  std::array<double, 5> lower{};
  std::array<double, 5> upper{};
  /// Largest coordinate range spanned by the member points.
  double extent() const;
};

struct UniquenessReport {
  double step = 0.0;
  double tolerance = 0.0;
  std::size_t hits = 0;
  std::vector<GridCluster> clusters;
  /// Distinct exact roots reached by Newton from the grid hits.
  std::vector<BinaryJoint> roots;
  /// Exactly one distinct root.
  bool unique = false;
};

/// Exhaustive scan of the five-parameter box on a grid of the given step,
/// keeping points whose maximal cell residual is <= tolerance and grouping
/// grid-adjacent hits into clusters. The default tolerance is half a step,
/// widened to the full step when that leaves no hits.
///
/// A residual tolerance admits wide or broken-up hit regions wherever the
/// map is ill-conditioned, so every cluster is refined by Newton from a
/// sample of its hits; the distinct in-box roots decide uniqueness.
UniquenessReport check_uniqueness(const BinaryObservables& obs, double step = 0.01,
                                  std::optional<double> tolerance = std::nullopt);

}  // namespace shadow
