#include "shadowmnar/solver.hpp"

#include "shadowmnar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shadow {

void MomentSystem::check() const {
  if (param_dim < 1 || moment_dim < param_dim) {
    throw EstimationError("moment system needs moment_dim >= param_dim >= 1");
  }
  if (records < 1) throw EstimationError("moment system has no records");
  if (!eval) throw EstimationError("moment system has no residual function");
}

Eigen::VectorXd mean_residuals(const MomentSystem& sys, const Eigen::VectorXd& theta) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(sys.moment_dim);
  Eigen::VectorXd g(sys.moment_dim);
  for (Eigen::Index i = 0; i < sys.records; ++i) {
    sys.eval(i, theta, g);
    sum += g;
  }
  return sum / static_cast<double>(sys.records);
}

Eigen::MatrixXd residual_matrix(const MomentSystem& sys, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd out(sys.records, sys.moment_dim);
  Eigen::VectorXd g(sys.moment_dim);
  for (Eigen::Index i = 0; i < sys.records; ++i) {
    sys.eval(i, theta, g);
    out.row(i) = g.transpose();
  }
  return out;
}

Eigen::MatrixXd numerical_jacobian(const MomentSystem& sys, const Eigen::VectorXd& theta,
                                   double relative_step) {
  Eigen::MatrixXd jac(sys.moment_dim, sys.param_dim);
  Eigen::VectorXd probe = theta;
  for (Eigen::Index j = 0; j < sys.param_dim; ++j) {
    const double h = relative_step * std::max(1.0, std::abs(theta[j]));
    probe[j] = theta[j] + h;
    const Eigen::VectorXd up = mean_residuals(sys, probe);
    probe[j] = theta[j] - h;
    const Eigen::VectorXd down = mean_residuals(sys, probe);
    probe[j] = theta[j];
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

double condition_number(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return std::numeric_limits<double>::infinity();
  const double smallest = sv[sv.size() - 1];
  if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
  return sv[0] / smallest;
}

namespace {

double inf_norm(const Eigen::VectorXd& v) {
  if (!v.allFinite()) return std::numeric_limits<double>::infinity();
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

double sq_norm(const Eigen::VectorXd& v) {
  return v.allFinite() ? v.squaredNorm() : std::numeric_limits<double>::infinity();
}

SolveReport newton(const MomentSystem& sys, const Eigen::VectorXd& theta0, const SolverOptions& opt) {
  SolveReport report;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd g = mean_residuals(sys, theta);
  if (!g.allFinite()) throw EstimationError("moment residuals are not finite at the starting value");

  for (int iter = 0;; ++iter) {
    report.iterations = iter;
    if (inf_norm(g) <= opt.root_tolerance) {
      report.converged = true;
      break;
    }
    if (iter == opt.max_iterations) {
      report.message = "maximum iterations reached";
      break;
    }
    const Eigen::MatrixXd jac = numerical_jacobian(sys, theta, opt.jacobian_step);
    report.jacobian_condition = condition_number(jac);
    if (!(report.jacobian_condition <= opt.max_condition)) {
      throw SingularJacobianError("singular Jacobian in Newton iteration " + std::to_string(iter),
                                  report.jacobian_condition);
    }
    const Eigen::VectorXd step = jac.partialPivLu().solve(-g);

    const double current = sq_norm(g);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, scale *= 0.5) {
      const Eigen::VectorXd candidate = theta + scale * step;
      const Eigen::VectorXd g_new = mean_residuals(sys, candidate);
      if (sq_norm(g_new) < current) {
        theta = candidate;
        g = g_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.message = "line search failed to reduce the residual";
      report.iterations = iter + 1;
      break;
    }
  }
  report.theta_hat = theta;
  report.final_residual_norm = inf_norm(g);
  if (report.jacobian_condition == 0.0) {
    report.jacobian_condition = condition_number(numerical_jacobian(sys, theta, opt.jacobian_step));
  }
  return report;
}

}  // namespace

SolveReport minimize_quadratic_form(const MomentSystem& sys, const Eigen::VectorXd& theta0,
                                    const Eigen::MatrixXd& weight, const SolverOptions& opt) {
  sys.check();
  SolveReport report;
  report.weight = weight;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd g = mean_residuals(sys, theta);
  if (!g.allFinite()) throw EstimationError("moment residuals are not finite at the starting value");
  auto objective = [&](const Eigen::VectorXd& v) {
    return v.allFinite() ? v.dot(weight * v) : std::numeric_limits<double>::infinity();
  };

  double q = objective(g);
  double grad_norm = std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    report.iterations = iter;
    const Eigen::MatrixXd jac = numerical_jacobian(sys, theta, opt.jacobian_step);
    const Eigen::VectorXd grad = 2.0 * jac.transpose() * weight * g;
    grad_norm = inf_norm(grad);
    if (grad_norm <= opt.gradient_tolerance) {
      report.converged = true;
      break;
    }
    if (iter == opt.max_iterations) {
      report.message = "maximum iterations reached";
      break;
    }
    const Eigen::MatrixXd normal = jac.transpose() * weight * jac;
    report.jacobian_condition = condition_number(normal);
    if (!(report.jacobian_condition <= opt.max_condition)) {
      throw SingularJacobianError("singular GMM normal matrix", report.jacobian_condition);
    }
    const Eigen::VectorXd step = normal.ldlt().solve(-jac.transpose() * weight * g);

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, scale *= 0.5) {
      const Eigen::VectorXd candidate = theta + scale * step;
      const Eigen::VectorXd g_new = mean_residuals(sys, candidate);
      const double q_new = objective(g_new);
      if (q_new < q) {
        theta = candidate;
        g = g_new;
        q = q_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // The quadratic form cannot decrease further in floating point.
      report.converged = grad_norm <= 1e3 * opt.gradient_tolerance;
      report.message = "line search stalled";
      break;
    }
  }
  report.theta_hat = theta;
  report.objective = q;
  report.final_residual_norm = grad_norm;
  return report;
}

SolveReport solve_moments(const MomentSystem& sys, const Eigen::VectorXd& theta0, const SolverOptions& options) {
  sys.check();
  if (theta0.size() != sys.param_dim || !theta0.allFinite()) {
    throw EstimationError("starting value must be finite with param_dim entries");
  }
  if (sys.moment_dim == sys.param_dim) return newton(sys, theta0, options);

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(sys.moment_dim, sys.moment_dim);
  SolveReport first = minimize_quadratic_form(sys, theta0, identity, options);

  const Eigen::MatrixXd resid = residual_matrix(sys, first.theta_hat);
  const Eigen::MatrixXd centered = resid.rowwise() - resid.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(sys.records);
  const double cond = condition_number(cov);
  if (!(cond <= options.max_condition)) {
    throw SingularJacobianError("singular residual covariance for the GMM weight", cond);
  }
  const Eigen::MatrixXd weight = cov.ldlt().solve(identity);
  SolveReport second = minimize_quadratic_form(sys, first.theta_hat, weight, options);
  second.iterations += first.iterations;
  return second;
}

Eigen::MatrixXd sandwich_covariance(const MomentSystem& sys, const Eigen::VectorXd& theta_hat,
                                    const std::optional<Eigen::MatrixXd>& weight,
                                    const SolverOptions& options) {
  sys.check();
  const double n = static_cast<double>(sys.records);
  const Eigen::MatrixXd a = numerical_jacobian(sys, theta_hat, options.jacobian_step);

  const Eigen::MatrixXd resid = residual_matrix(sys, theta_hat);
  const Eigen::MatrixXd centered = resid.rowwise() - resid.colwise().mean();
  const Eigen::MatrixXd b = centered.transpose() * centered / n;

  Eigen::MatrixXd cov;
  if (sys.moment_dim == sys.param_dim) {
    const double cond = condition_number(a);
    if (!(cond <= options.max_condition)) throw SingularJacobianError("singular sandwich bread", cond);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd a_inv = lu.inverse();
    cov = a_inv * b * a_inv.transpose() / n;
  } else {
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(sys.moment_dim, sys.moment_dim);
    const Eigen::MatrixXd w = weight ? *weight : Eigen::MatrixXd(b.ldlt().solve(identity));
    const Eigen::MatrixXd bread = a.transpose() * w * a;
    const double cond = condition_number(bread);
    if (!(cond <= options.max_condition)) throw SingularJacobianError("singular GMM sandwich bread", cond);
    const Eigen::MatrixXd bread_inv = bread.ldlt().solve(Eigen::MatrixXd::Identity(sys.param_dim, sys.param_dim));
    cov = bread_inv * a.transpose() * w * b * w * a * bread_inv / n;
  }
  return 0.5 * (cov + cov.transpose());
}

}  // namespace shadow
