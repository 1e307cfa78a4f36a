#include "shadowmnar/quadrature.hpp"

#include "shadowmnar/errors.hpp"

#include <cmath>

namespace shadow {

GaussHermite::GaussHermite(int order) {
  if (order < 1) throw ConfigError("Gauss-Hermite order must be positive");
  // He_{k+1}(t) = t He_k(t) - k He_{k-1}(t): symmetric Jacobi matrix with
  // zero diagonal and off-diagonal sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw Error("Gauss-Hermite eigen-decomposition failed");

  // Eigenvector components lose relative accuracy for the tiny tail
  // weights, so polish each node by Newton on the orthonormal polynomial
  // and take the Christoffel weight 1 / sum_k p_k(t)^2 instead.
  nodes_ = solver.eigenvalues();
  weights_.resize(order);
  for (int j = 0; j < order; ++j) {
    double t = nodes_[j];
    double sum_sq = 0.0;
    for (int pass = 0; pass < 3; ++pass) {
      double p_prev = 0.0;
      double p = 1.0;  // p_0
      sum_sq = 1.0;
      for (int k = 0; k < order - 1; ++k) {
        const double next = (t * p - std::sqrt(static_cast<double>(k)) * p_prev) / std::sqrt(k + 1.0);
        p_prev = p;
        p = next;
        sum_sq += p * p;
      }
      // p = p_{n-1}; p_n and its derivative p_n' = sqrt(n) p_{n-1}.
      const double pn = (t * p - std::sqrt(order - 1.0) * p_prev) / std::sqrt(static_cast<double>(order));
      const double dpn = std::sqrt(static_cast<double>(order)) * p;
      if (pass < 2 && dpn != 0.0) t -= pn / dpn;
    }
    nodes_[j] = t;
    weights_[j] = 1.0 / sum_sq;
  }
  weights_ /= weights_.sum();
}

}  // namespace shadow
