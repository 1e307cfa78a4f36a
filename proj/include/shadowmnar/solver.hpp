#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace shadow {

/// Vector moment function evaluated record by record.
///
/// Estimation targets the root (or, when over-identified, the GMM
/// minimizer) of the sample mean of `eval` over all records.
struct MomentSystem {
  using Residual =
      std::function<void(Eigen::Index record, const Eigen::VectorXd& theta, Eigen::Ref<Eigen::VectorXd> out)>;

  Eigen::Index param_dim = 0;
  Eigen::Index moment_dim = 0;
  Eigen::Index records = 0;
  Residual eval;
  std::vector<std::string> param_names;

  void check() const;
};

struct SolverOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  /// Newton stops at ||mean residual||_inf <= root_tolerance.
  double root_tolerance = 1e-8;
  /// GMM stops at ||gradient of the quadratic form||_inf <= gradient_tolerance.
  double gradient_tolerance = 1e-6;
  /// Relative central-difference step: h_j = step * max(1, |theta_j|).
  double jacobian_step = 1e-5;
  /// Jacobians with a larger 2-norm condition number are treated as singular.
  double max_condition = 1e12;
};

struct SolveReport {
  Eigen::VectorXd theta_hat;
  bool converged = false;
  int iterations = 0;
  double final_residual_norm = 0.0;
  double jacobian_condition = 0.0;
  /// GMM only: final quadratic form and the weight matrix it used.
  double objective = 0.0;
  Eigen::MatrixXd weight;
  std::string message;
};

Eigen::VectorXd mean_residuals(const MomentSystem& sys, const Eigen::VectorXd& theta);
/// records x moment_dim matrix of per-record residuals.
Eigen::MatrixXd residual_matrix(const MomentSystem& sys, const Eigen::VectorXd& theta);
/// Central-difference Jacobian of the mean residuals.
Eigen::MatrixXd numerical_jacobian(const MomentSystem& sys, const Eigen::VectorXd& theta,
                                   double relative_step = 1e-5);
double condition_number(const Eigen::MatrixXd& m);

/// Newton root of the mean residuals when exactly identified; two-step
/// GMM (identity weight, then inverse residual covariance) otherwise.
///
/// Non-convergence is reported through `converged == false`. A singular
/// Jacobian throws SingularJacobianError.
SolveReport solve_moments(const MomentSystem& sys, const Eigen::VectorXd& theta0,
                          const SolverOptions& options = {});

/// Minimizes G(theta)' W G(theta) by Gauss-Newton with step halving.
SolveReport minimize_quadratic_form(const MomentSystem& sys, const Eigen::VectorXd& theta0,
                                    const Eigen::MatrixXd& weight, const SolverOptions& options = {});

/// Stacked M-estimation sandwich (1/n) A^{-1} B A^{-T}, A the numerical
/// Jacobian of the mean residuals and B the covariance of per-record
/// residuals. When over-identified the GMM form
/// (A'WA)^{-1} A'WBWA (A'WA)^{-1} / n is used, W defaulting to B^{-1}.
Eigen::MatrixXd sandwich_covariance(const MomentSystem& sys, const Eigen::VectorXd& theta_hat,
                                    const std::optional<Eigen::MatrixXd>& weight = std::nullopt,
                                    const SolverOptions& options = {});

}  // namespace shadow
