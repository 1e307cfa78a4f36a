#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace shadow {

/// n records of (covariates x, shadow z, response indicator r, outcome y).
///
/// `y(i)` is NaN whenever `r(i) == 0`; covariates and shadow are always
/// complete.
struct ShadowDataset {
  std::vector<std::string> covariate_names;
  std::string shadow_name = "z";
  std::string outcome_name = "y";

  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd z;
  Eigen::VectorXd r;  // 0/1
  Eigen::VectorXd y;

  Eigen::Index size() const noexcept { return z.size(); }
  Eigen::Index observed_count() const;
  double missing_fraction() const;

  /// y with missing entries replaced by 0, so r(i) * y0(i) is always finite.
  Eigen::VectorXd outcome_or_zero() const;

  /// Throws DataError unless shapes agree, x and z are finite, r is 0/1
  /// and y is finite exactly where r == 1.
  void validate() const;

  ShadowDataset permuted(const std::vector<Eigen::Index>& order) const;
};

/// Simulated data together with the full outcome before deletion.
///
/// Estimators take `ShadowDataset`, so the oracle column can only reach
/// validation code.
struct SimulatedDataset {
  ShadowDataset observed;
  Eigen::VectorXd y_full;
};

}  // namespace shadow
