#pragma once

#include <Eigen/Dense>

namespace shadow {

/// Gauss-Hermite rule for expectations under the standard normal:
/// E f(X) ~= sum_k weights[k] * f(nodes[k]), X ~ N(0, 1).
///
/// Nodes and weights come from the Golub-Welsch eigen-decomposition of
/// the Jacobi matrix of the probabilists' Hermite recurrence.
class GaussHermite {
 public:
  explicit GaussHermite(int order);

  int order() const noexcept { return static_cast<int>(nodes_.size()); }
  const Eigen::VectorXd& nodes() const noexcept { return nodes_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < nodes_.size(); ++k) acc += weights_[k] * f(nodes_[k]);
    return acc;
  }

  /// E f(Y) for Y ~ N(mean, sd^2).
  template <class F>
  double expect_normal(double mean, double sd, F&& f) const {
    return expect([&](double t) { return f(mean + sd * t); });
  }

 private:
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
};

}  // namespace shadow
