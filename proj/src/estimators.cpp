#include "shadowmnar/estimators.hpp"

#include "shadowmnar/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>

namespace shadow {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kDR:
      return "DR";
    case Method::kIPW:
      return "IPW";
    case Method::kREG:
      return "REG";
    case Method::kCMP:
      return "CMP";
    case Method::kMARIPW:
      return "marIPW";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string lower;
  for (char c : name) {
    if (!std::isspace(static_cast<unsigned char>(c))) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (lower == "dr") return Method::kDR;
  if (lower == "ipw") return Method::kIPW;
  if (lower == "reg") return Method::kREG;
  if (lower == "cmp") return Method::kCMP;
  if (lower == "maripw" || lower == "mar-ipw" || lower == "mar_ipw") return Method::kMARIPW;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected dr, ipw, reg, cmp, maripw)");
}

std::vector<Method> parse_method_list(std::string_view list) {
  std::vector<Method> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const std::string_view token = list.substr(0, comma);
    if (token.find_first_not_of(' ') != std::string_view::npos) {
      const Method m = parse_method(token);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return out;
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<>(), 0.5 + 0.5 * level);
}

double EstimationResult::se_of(std::string_view param) const {
  const auto it = std::find(param_names.begin(), param_names.end(), param);
  if (it == param_names.end()) throw Error("no parameter named '" + std::string(param) + "'");
  const auto k = static_cast<Eigen::Index>(it - param_names.begin());
  return std::sqrt(std::max(cov(k, k), 0.0));
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using RecordFn = std::function<void(Index, const VectorXd&, Eigen::Ref<VectorXd>)>;

/// Design matrices and data columns evaluated once per estimation.
struct Prepared {
  Index n = 0;
  MatrixXd d;   // baseline propensity design
  MatrixXd b1;  // outcome mean design
  MatrixXd b2;  // shadow mean design
  MatrixXd hc;  // covariate block of h
  MatrixXd hs;  // shadow multiplier block of h
  VectorXd z;
  VectorXd r;
  VectorXd y0;
};

Prepared prepare(const ShadowDataset& data, const ModelSpec& spec) {
  data.validate();
  if (data.size() == 0) throw DataError("dataset is empty");
  Prepared p;
  p.n = data.size();
  p.d = spec.propensity.design.matrix(data.x);
  p.b1 = spec.outcome.y_design.matrix(data.x);
  p.b2 = spec.outcome.z_design.matrix(data.x);
  p.hc = spec.h.covariate_terms.matrix(data.x);
  p.hs = spec.h.shadow_terms.matrix(data.x);
  p.z = data.z;
  p.r = data.r;
  p.y0 = data.outcome_or_zero();
  return p;
}

class Layout {
 public:
  Index add(const std::string& prefix, const std::vector<std::string>& terms) {
    const Index offset = size();
    for (const auto& t : terms) names_.push_back(prefix + "[" + t + "]");
    return offset;
  }
  Index add(const std::string& name) {
    names_.push_back(name);
    return size() - 1;
  }
  Index size() const { return static_cast<Index>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// A group of moments over the full stacked parameter vector. A non-empty
/// `projection` L replaces the block residual g by L g, which turns an
/// over-identified GMM block into the exactly identified system its
/// estimator actually solves.
struct Block {
  Index moments = 0;
  RecordFn eval;
  MatrixXd projection;

  Index output_dim() const { return projection.size() ? projection.rows() : moments; }
};

MomentSystem stack(std::vector<Block> blocks, const Layout& layout, Index records) {
  MomentSystem sys;
  sys.param_dim = layout.size();
  sys.records = records;
  sys.param_names = layout.names();
  for (const auto& b : blocks) sys.moment_dim += b.output_dim();
  auto scratch = std::make_shared<std::vector<VectorXd>>();
  for (const auto& b : blocks) scratch->emplace_back(b.moments);
  sys.eval = [blocks = std::move(blocks), scratch](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
    Index row = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const Block& b = blocks[k];
      VectorXd& g = (*scratch)[k];
      b.eval(i, theta, g);
      if (b.projection.size()) {
        out.segment(row, b.projection.rows()).noalias() = b.projection * g;
      } else {
        out.segment(row, b.moments) = g;
      }
      row += b.output_dim();
    }
  };
  return sys;
}

/// Moment system over a subset of the stacked parameters, the others held
/// at `base`.
MomentSystem restrict_to(const Block& block, VectorXd base, std::vector<Index> free, Index records) {
  MomentSystem sys;
  sys.param_dim = static_cast<Index>(free.size());
  sys.moment_dim = block.moments;
  sys.records = records;
  auto full = std::make_shared<VectorXd>(std::move(base));
  sys.eval = [eval = block.eval, full, free = std::move(free)](Index i, const VectorXd& sub, Eigen::Ref<VectorXd> out) {
    for (std::size_t k = 0; k < free.size(); ++k) (*full)[free[k]] = sub[static_cast<Index>(k)];
    eval(i, *full, out);
  };
  return sys;
}

std::vector<Index> index_range(Index offset, Index count) {
  std::vector<Index> out;
  for (Index k = 0; k < count; ++k) out.push_back(offset + k);
  return out;
}

/// Solves one stage, writes the estimate into `theta`, and returns the
/// projection that makes the block exactly identified (empty if it already is).
MatrixXd solve_stage(Block& block, VectorXd& theta, const std::vector<Index>& free, Index records,
                     const SolverOptions& options, std::vector<SolveReport>& stages) {
  MomentSystem sys = restrict_to(block, theta, free, records);
  VectorXd start(static_cast<Index>(free.size()));
  for (std::size_t k = 0; k < free.size(); ++k) start[static_cast<Index>(k)] = theta[free[k]];
  SolveReport report = solve_moments(sys, start, options);
  for (std::size_t k = 0; k < free.size(); ++k) theta[free[k]] = report.theta_hat[static_cast<Index>(k)];
  MatrixXd projection;
  if (sys.moment_dim > sys.param_dim) {
    const MatrixXd jac = numerical_jacobian(sys, report.theta_hat, options.jacobian_step);
    projection = jac.transpose() * report.weight;
  }
  stages.push_back(std::move(report));
  return projection;
}

VectorXd least_squares(const MatrixXd& x, const VectorXd& y, const std::vector<std::string>& names,
                       const std::string& what) {
  if (x.rows() < x.cols()) {
    throw EstimationError(what + ": " + std::to_string(x.rows()) + " complete cases for " +
                          std::to_string(x.cols()) + " coefficients");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    // Each dependent pivot column is a combination of the leading ones;
    // report every column that takes part in such a combination.
    const Index rank = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    const MatrixXd r = qr.matrixR().topRows(rank).triangularView<Eigen::Upper>();
    std::vector<bool> involved(static_cast<std::size_t>(x.cols()), false);
    for (Index k = rank; k < x.cols(); ++k) {
      involved[static_cast<std::size_t>(perm[k])] = true;
      const VectorXd coef = r.leftCols(rank).triangularView<Eigen::Upper>().solve(r.col(k));
      const double scale = std::max(1.0, coef.cwiseAbs().maxCoeff());
      for (Index j = 0; j < rank; ++j) {
        if (std::abs(coef[j]) > 1e-8 * scale) involved[static_cast<std::size_t>(perm[j])] = true;
      }
    }
    std::vector<std::string> collinear;
    for (std::size_t j = 0; j < involved.size(); ++j) {
      if (involved[j]) collinear.push_back(names[j]);
    }
    throw RankDeficientError(what + " design is rank deficient", collinear);
  }
  return qr.solve(y);
}

std::vector<Index> complete_cases(const VectorXd& r) {
  std::vector<Index> out;
  for (Index i = 0; i < r.size(); ++i) {
    if (r[i] > 0.5) out.push_back(i);
  }
  return out;
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

VectorXd rows_of(const VectorXd& v, const std::vector<Index>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = v[rows[k]];
  return out;
}

// ---------------------------------------------------------------------------
// Moment blocks. Offsets index the stacked parameter vector.

struct GammaRef {
  Index offset = -1;  // -1: fixed
  double fixed = 0.0;
  double get(const VectorXd& theta) const { return offset >= 0 ? theta[offset] : fixed; }
};

struct BetaOffsets {
  Index beta1 = 0;
  Index s1 = 0;
  Index beta2 = 0;
  Index beta22 = 0;
};

double inverse_weight(const Prepared& p, Index i, const VectorXd& theta, Index alpha, double gamma) {
  const double t = p.d.row(i).dot(theta.segment(alpha, p.d.cols()));
  return kernel::inverse_response_probability(t, -gamma * p.y0[i]);
}

/// {w(x, y; alpha, gamma) r - 1} h(x, z).
Block ipw_block(const Prepared& p, Index alpha, GammaRef gamma) {
  const Index nc = p.hc.cols();
  const Index ns = p.hs.cols();
  return {nc + ns,
          [&p, alpha, gamma, nc, ns](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
            const double factor = p.r[i] > 0.5 ? inverse_weight(p, i, theta, alpha, gamma.get(theta)) - 1.0 : -1.0;
            out.head(nc) = factor * p.hc.row(i).transpose();
            out.tail(ns) = (factor * p.z[i]) * p.hs.row(i).transpose();
          },
          {}};
}

/// Complete-case normal-equation scores of the baseline outcome fit.
Block beta_block(const Prepared& p, BetaOffsets o) {
  const Index k1 = p.b1.cols();
  const Index k2 = p.b2.cols();
  return {k1 + 1 + k2 + 1,
          [&p, o, k1, k2](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
            if (p.r[i] < 0.5) {
              out.setZero();
              return;
            }
            const double e1 = p.y0[i] - p.b1.row(i).dot(theta.segment(o.beta1, k1));
            const double e2 = p.z[i] - p.b2.row(i).dot(theta.segment(o.beta2, k2)) - theta[o.beta22] * p.y0[i];
            out.head(k1) = e1 * p.b1.row(i).transpose();
            out[k1] = e1 * e1 - theta[o.s1];
            out.segment(k1 + 1, k2) = e2 * p.b2.row(i).transpose();
            out[k1 + 1 + k2] = e2 * p.y0[i];
          },
          {}};
}

/// E(Y | r = 0, x) = mu1(x) + delta sigma1^2 with delta = -gamma.
double tilted_mean(const Prepared& p, Index i, const VectorXd& theta, BetaOffsets o, double gamma) {
  return p.b1.row(i).dot(theta.segment(o.beta1, p.b1.cols())) - gamma * theta[o.s1];
}

double tilted_shadow_mean(const Prepared& p, Index i, const VectorXd& theta, BetaOffsets o, double gamma) {
  return p.b2.row(i).dot(theta.segment(o.beta2, p.b2.cols())) + theta[o.beta22] * tilted_mean(p, i, theta, o, gamma);
}

/// (1 - r){z - E[z | r = 0, x]} s(x).
Block reg_gamma_block(const Prepared& p, BetaOffsets o, GammaRef gamma) {
  return {p.hs.cols(),
          [&p, o, gamma](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
            if (p.r[i] > 0.5) {
              out.setZero();
              return;
            }
            const double e = p.z[i] - tilted_shadow_mean(p, i, theta, o, gamma.get(theta));
            out = e * p.hs.row(i).transpose();
          },
          {}};
}

/// {w r - 1}{z - E[z | r = 0, x]} s(x).
Block dr_gamma_block(const Prepared& p, Index alpha, BetaOffsets o, GammaRef gamma) {
  return {p.hs.cols(),
          [&p, alpha, o, gamma](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
            const double g = gamma.get(theta);
            const double factor = p.r[i] > 0.5 ? inverse_weight(p, i, theta, alpha, g) - 1.0 : -1.0;
            const double e = p.z[i] - tilted_shadow_mean(p, i, theta, o, g);
            out = (factor * e) * p.hs.row(i).transpose();
          },
          {}};
}

Block scalar_block(std::function<double(Index, const VectorXd&)> f, Index mu) {
  return {1,
          [f = std::move(f), mu](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
            out[0] = f(i, theta) - theta[mu];
          },
          {}};
}

double sample_mean(Index n, const std::function<double(Index)>& f) {
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) acc += f(i);
  return acc / static_cast<double>(n);
}

bool all_converged(const std::vector<SolveReport>& stages) {
  return std::all_of(stages.begin(), stages.end(), [](const SolveReport& s) { return s.converged; });
}

/// Starting value for alpha: complete-case response model fit on d(x).
VectorXd initial_alpha(const Prepared& p, const SolverOptions& options, std::vector<SolveReport>& stages) {
  SolveReport fit = fit_logistic(p.d, p.r, options);
  VectorXd alpha = fit.theta_hat;
  stages.push_back(std::move(fit));
  return alpha;
}

void weight_diagnostics(const Prepared& p, const std::function<double(Index)>& weight, double threshold,
                        Diagnostics& diag) {
  for (Index i = 0; i < p.n; ++i) {
    if (p.r[i] < 0.5) continue;
    const double w = weight(i);
    diag.max_weight = std::max(diag.max_weight, w);
    if (w > threshold) ++diag.extreme_weight_count;
  }
  if (diag.extreme_weight_count > 0) {
    diag.warnings.push_back(std::to_string(diag.extreme_weight_count) + " inverse weights exceed " +
                            std::to_string(threshold));
  }
}

void finish(EstimationResult& res, const MomentSystem& stacked, const EstimatorOptions& options,
            Index mu, Index gamma) {
  res.param_names = stacked.param_names;
  res.cov = sandwich_covariance(stacked, res.theta, std::nullopt, options.solver);
  const double zc = normal_critical_value(options.level);
  res.mu_hat = res.theta[mu];
  res.se_mu = std::sqrt(std::max(res.cov(mu, mu), 0.0));
  res.ci_mu = {res.mu_hat - zc * res.se_mu, res.mu_hat + zc * res.se_mu};
  if (gamma >= 0) {
    res.gamma_hat = res.theta[gamma];
    res.se_gamma = std::sqrt(std::max(res.cov(gamma, gamma), 0.0));
    res.ci_gamma = Interval{*res.gamma_hat - zc * *res.se_gamma, *res.gamma_hat + zc * *res.se_gamma};
  }
  res.converged = all_converged(res.stages);
  const double residual = mean_residuals(stacked, res.theta).cwiseAbs().maxCoeff();
  if (res.converged && residual > 1e-6) {
    res.diagnostics.warnings.push_back("stacked moments not at a root: " + std::to_string(residual));
  }
}

std::vector<std::string> with(std::vector<std::string> names, const std::string& extra) {
  names.push_back(extra);
  return names;
}

void require_h(const ModelSpec& spec, std::size_t needed, const char* method) {
  if (spec.h.size() < needed) {
    throw ConfigError(std::string(method) + " needs dim(h) >= " + std::to_string(needed) + ", got " +
                      std::to_string(spec.h.size()));
  }
}

/// Adds the beta block to the layout and fills theta from the ML fit.
BetaOffsets add_beta(Layout& layout, const ModelSpec& spec, const ShadowDataset& data,
                     std::vector<double>& start, EstimationResult& res) {
  const BaselineFit fit = fit_baseline_outcome(data, spec.outcome.y_design, spec.outcome.z_design);
  BetaOffsets o;
  o.beta1 = layout.add("beta1", spec.outcome.y_design.term_names());
  o.s1 = layout.add("sigma1^2");
  o.beta2 = layout.add("beta2", spec.outcome.z_design.term_names());
  o.beta22 = layout.add("beta22");
  for (Index k = 0; k < fit.outcome.beta1.size(); ++k) start.push_back(fit.outcome.beta1[k]);
  start.push_back(fit.outcome.sigma1 * fit.outcome.sigma1);
  for (Index k = 0; k < fit.outcome.beta2.size(); ++k) start.push_back(fit.outcome.beta2[k]);
  start.push_back(fit.outcome.beta22);
  if (fit.sigma1_degenerate) res.diagnostics.warnings.push_back("outcome residual variance is zero");
  if (fit.sigma2_degenerate) res.diagnostics.warnings.push_back("shadow residual variance is zero");
  return o;
}

VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------

SolveReport fit_logistic(const MatrixXd& design, const VectorXd& r, const SolverOptions& options) {
  MomentSystem sys;
  sys.param_dim = design.cols();
  sys.moment_dim = design.cols();
  sys.records = design.rows();
  sys.eval = [&design, &r](Index i, const VectorXd& theta, Eigen::Ref<VectorXd> out) {
    const double p = kernel::expit(design.row(i).dot(theta));
    out = (r[i] - p) * design.row(i).transpose();
  };
  return solve_moments(sys, VectorXd::Zero(design.cols()), options);
}

BaselineFit fit_baseline_outcome(const ShadowDataset& data, const Design& y_design, const Design& z_design) {
  data.validate();
  const VectorXd r = data.r;
  const std::vector<Index> cc = complete_cases(r);
  const MatrixXd b1 = rows_of(y_design.matrix(data.x), cc);
  const MatrixXd b2 = rows_of(z_design.matrix(data.x), cc);
  const VectorXd y = rows_of(data.y, cc);
  const VectorXd z = rows_of(data.z, cc);
  const auto m = static_cast<double>(cc.size());

  BaselineFit fit;
  fit.complete_cases = static_cast<Index>(cc.size());
  BaselineOutcome& out = fit.outcome;
  out.y_design = y_design;
  out.z_design = z_design;

  out.beta1 = least_squares(b1, y, y_design.term_names(), "outcome regression");
  const VectorXd e1 = y - b1 * out.beta1;
  out.sigma1 = std::sqrt(e1.squaredNorm() / m);

  MatrixXd x2(b2.rows(), b2.cols() + 1);
  x2 << b2, y;
  const VectorXd coef = least_squares(x2, z, with(z_design.term_names(), data.outcome_name), "shadow regression");
  out.beta2 = coef.head(b2.cols());
  out.beta22 = coef[b2.cols()];
  const VectorXd e2 = z - x2 * coef;
  out.sigma2 = std::sqrt(e2.squaredNorm() / m);

  const double y_scale = 1.0 + (y.size() ? y.cwiseAbs().maxCoeff() : 0.0);
  const double z_scale = 1.0 + (z.size() ? z.cwiseAbs().maxCoeff() : 0.0);
  fit.sigma1_degenerate = out.sigma1 <= 1e-10 * y_scale;
  fit.sigma2_degenerate = out.sigma2 <= 1e-10 * z_scale;

  const double dof = std::max(m - static_cast<double>(x2.cols()), 1.0);
  const MatrixXd xtx_inv = (x2.transpose() * x2).inverse();
  fit.beta22_se = std::sqrt(e2.squaredNorm() / dof * xtx_inv(x2.cols() - 1, x2.cols() - 1));
  return fit;
}

EstimationResult estimate_ipw(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options) {
  const Prepared p = prepare(data, spec);
  const Index pa = p.d.cols();
  const bool free_gamma = !options.fixed_gamma;
  require_h(spec, static_cast<std::size_t>(pa + (free_gamma ? 1 : 0)), "IPW");

  EstimationResult res;
  res.method = Method::kIPW;
  Layout layout;
  const Index alpha = layout.add("alpha", spec.propensity.design.term_names());
  GammaRef gamma{-1, options.fixed_gamma.value_or(0.0)};
  if (free_gamma) gamma.offset = layout.add("gamma");
  const Index mu = layout.add("mu");

  VectorXd theta = VectorXd::Zero(layout.size());
  theta.segment(alpha, pa) = initial_alpha(p, options.solver, res.stages);

  Block ipw = ipw_block(p, alpha, gamma);
  std::vector<Index> free = index_range(alpha, pa);
  if (free_gamma) free.push_back(gamma.offset);
  ipw.projection = solve_stage(ipw, theta, free, p.n, options.solver, res.stages);
  res.solver = res.stages.back();

  auto weight = [&](Index i) { return inverse_weight(p, i, theta, alpha, gamma.get(theta)); };
  theta[mu] = sample_mean(p.n, [&](Index i) { return p.r[i] > 0.5 ? weight(i) * p.y0[i] : 0.0; });
  weight_diagnostics(p, weight, options.extreme_weight, res.diagnostics);

  Block mean = scalar_block(
      [&p, alpha, gamma](Index i, const VectorXd& th) {
        return p.r[i] > 0.5 ? inverse_weight(p, i, th, alpha, gamma.get(th)) * p.y0[i] : 0.0;
      },
      mu);
  const MomentSystem stacked = stack({ipw, mean}, layout, p.n);
  res.theta = theta;
  res.alpha_hat = theta.segment(alpha, pa);
  finish(res, stacked, options, mu, gamma.offset);
  return res;
}

EstimationResult estimate_reg(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options) {
  const Prepared p = prepare(data, spec);
  const bool free_gamma = !options.fixed_gamma;
  if (spec.h.shadow_terms.size() < 1) throw ConfigError("REG needs at least one shadow component in h");

  EstimationResult res;
  res.method = Method::kREG;
  Layout layout;
  std::vector<double> start;
  const BetaOffsets o = add_beta(layout, spec, data, start, res);
  GammaRef gamma{-1, options.fixed_gamma.value_or(0.0)};
  if (free_gamma) {
    gamma.offset = layout.add("gamma");
    start.push_back(0.0);
  }
  const Index mu = layout.add("mu");
  start.push_back(0.0);
  VectorXd theta = to_vector(start);

  Block betas = beta_block(p, o);
  std::vector<Block> blocks{betas};
  if (free_gamma) {
    Block g = reg_gamma_block(p, o, gamma);
    g.projection = solve_stage(g, theta, {gamma.offset}, p.n, options.solver, res.stages);
    res.solver = res.stages.back();
    blocks.push_back(g);
  }

  const bool observed = options.reg_variant == RegVariant::kObservedOutcome;
  auto mean_fn = [&p, o, gamma, observed](Index i, const VectorXd& th) {
    if (p.r[i] > 0.5) return observed ? p.y0[i] : p.b1.row(i).dot(th.segment(o.beta1, p.b1.cols()));
    return tilted_mean(p, i, th, o, gamma.get(th));
  };
  theta[mu] = sample_mean(p.n, [&](Index i) { return mean_fn(i, theta); });
  blocks.push_back(scalar_block(mean_fn, mu));

  const MomentSystem stacked = stack(std::move(blocks), layout, p.n);
  res.theta = theta;
  res.beta_hat = theta.segment(o.beta1, o.beta22 + 1 - o.beta1);
  finish(res, stacked, options, mu, gamma.offset);
  res.diagnostics.shadow_relevance = std::abs(theta[o.beta22]) / res.se_of("beta22");
  return res;
}

EstimationResult estimate_dr(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options) {
  const Prepared p = prepare(data, spec);
  const Index pa = p.d.cols();
  const bool free_gamma = !options.fixed_gamma;
  require_h(spec, static_cast<std::size_t>(pa + 1), "DR");

  EstimationResult res;
  res.method = Method::kDR;
  Layout layout;
  std::vector<double> start;
  const Index alpha = layout.add("alpha", spec.propensity.design.term_names());
  start.resize(static_cast<std::size_t>(pa), 0.0);
  const Index gamma_ipw = layout.add("gamma_ipw");
  start.push_back(0.0);
  const BetaOffsets o = add_beta(layout, spec, data, start, res);
  GammaRef gamma{-1, options.fixed_gamma.value_or(0.0)};
  if (free_gamma) {
    gamma.offset = layout.add("gamma");
    start.push_back(0.0);
  }
  const Index mu = layout.add("mu");
  start.push_back(0.0);
  VectorXd theta = to_vector(start);
  theta.segment(alpha, pa) = initial_alpha(p, options.solver, res.stages);

  // alpha comes from the joint IPW solve with its own gamma.
  Block ipw = ipw_block(p, alpha, GammaRef{gamma_ipw, 0.0});
  std::vector<Index> ipw_free = index_range(alpha, pa);
  ipw_free.push_back(gamma_ipw);
  ipw.projection = solve_stage(ipw, theta, ipw_free, p.n, options.solver, res.stages);

  std::vector<Block> blocks{ipw, beta_block(p, o)};
  if (free_gamma) {
    Block g = dr_gamma_block(p, alpha, o, gamma);
    g.projection = solve_stage(g, theta, {gamma.offset}, p.n, options.solver, res.stages);
    res.solver = res.stages.back();
    blocks.push_back(g);
  }

  auto mean_fn = [&p, alpha, o, gamma](Index i, const VectorXd& th) {
    const double g = gamma.get(th);
    const double m0 = tilted_mean(p, i, th, o, g);
    if (p.r[i] < 0.5) return m0;
    return inverse_weight(p, i, th, alpha, g) * (p.y0[i] - m0) + m0;
  };
  theta[mu] = sample_mean(p.n, [&](Index i) { return mean_fn(i, theta); });
  blocks.push_back(scalar_block(mean_fn, mu));
  weight_diagnostics(p, [&](Index i) { return inverse_weight(p, i, theta, alpha, gamma.get(theta)); },
                     options.extreme_weight, res.diagnostics);

  const MomentSystem stacked = stack(std::move(blocks), layout, p.n);
  res.theta = theta;
  res.alpha_hat = theta.segment(alpha, pa);
  res.beta_hat = theta.segment(o.beta1, o.beta22 + 1 - o.beta1);
  finish(res, stacked, options, mu, gamma.offset);
  res.diagnostics.shadow_relevance = std::abs(theta[o.beta22]) / res.se_of("beta22");
  return res;
}

EstimationResult estimate_cmp(const ShadowDataset& data, const ModelSpec& spec, const EstimatorOptions& options) {
  const Prepared p = prepare(data, spec);
  MatrixXd c(p.n, p.b1.cols() + 1);
  c << p.b1, p.z;
  const auto names = with(spec.outcome.y_design.term_names(), data.shadow_name);

  EstimationResult res;
  res.method = Method::kCMP;
  Layout layout;
  const Index beta = layout.add("beta", names);
  const Index mu = layout.add("mu");
  const Index k = c.cols();

  const std::vector<Index> cc = complete_cases(p.r);
  if (cc.empty()) throw DataError("CMP needs complete cases");
  VectorXd theta(layout.size());
  theta.segment(beta, k) = least_squares(rows_of(c, cc), rows_of(p.y0, cc), names, "complete-case regression");
  theta[mu] = (c * theta.segment(beta, k)).mean();

  Block reg{k,
            [&p, &c, beta, k](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
              if (p.r[i] < 0.5) {
                out.setZero();
                return;
              }
              out = (p.y0[i] - c.row(i).dot(th.segment(beta, k))) * c.row(i).transpose();
            },
            {}};
  Block mean = scalar_block([&c, beta, k](Index i, const VectorXd& th) { return c.row(i).dot(th.segment(beta, k)); }, mu);
  const MomentSystem stacked = stack({reg, mean}, layout, p.n);
  res.theta = theta;
  res.beta_hat = theta.segment(beta, k);
  finish(res, stacked, options, mu, -1);
  return res;
}

EstimationResult estimate_mar_ipw(const ShadowDataset& data, const ModelSpec& spec,
                                  const EstimatorOptions& options) {
  const Prepared p = prepare(data, spec);
  MatrixXd c;
  std::vector<std::string> names = spec.propensity.design.term_names();
  if (options.mar_include_shadow) {
    c.resize(p.n, p.d.cols() + 1);
    c << p.d, p.z;
    names.push_back(data.shadow_name);
  } else {
    c = p.d;
  }

  EstimationResult res;
  res.method = Method::kMARIPW;
  if (p.r.minCoeff() > 0.5) {
    // Every outcome observed: the response model has no finite ML fit and
    // the estimator is the sample mean.
    Layout layout;
    const Index mu = layout.add("mu");
    auto mean_fn = [&p](Index i, const VectorXd&) { return p.y0[i]; };
    VectorXd theta(1);
    theta[mu] = sample_mean(p.n, [&](Index i) { return p.y0[i]; });
    res.theta = theta;
    res.solver.converged = true;
    res.solver.theta_hat = theta;
    res.diagnostics.max_weight = 1.0;
    res.diagnostics.warnings.push_back("no missing outcomes; response model not fitted");
    finish(res, stack({scalar_block(mean_fn, mu)}, layout, p.n), options, mu, -1);
    return res;
  }
  Layout layout;
  const Index alpha = layout.add("alpha", names);
  const Index mu = layout.add("mu");
  const Index k = c.cols();
  const bool calibration = options.mar_fit == MarPropensityFit::kCalibration;

  auto weight = [&p, &c, alpha, k](Index i, const VectorXd& th) {
    return kernel::inverse_response_probability(c.row(i).dot(th.segment(alpha, k)), 0.0);
  };
  Block score{k,
              [&p, &c, alpha, k, calibration, weight](Index i, const VectorXd& th, Eigen::Ref<VectorXd> out) {
                const double factor = calibration
                                          ? (p.r[i] > 0.5 ? weight(i, th) : 0.0) - 1.0
                                          : p.r[i] - kernel::expit(c.row(i).dot(th.segment(alpha, k)));
                out = factor * c.row(i).transpose();
              },
              {}};
  VectorXd theta = VectorXd::Zero(layout.size());
  theta.segment(alpha, k) = fit_logistic(c, p.r, options.solver).theta_hat;
  solve_stage(score, theta, index_range(alpha, k), p.n, options.solver, res.stages);
  res.solver = res.stages.back();

  auto mean_fn = [&p, weight](Index i, const VectorXd& th) { return p.r[i] > 0.5 ? weight(i, th) * p.y0[i] : 0.0; };
  theta[mu] = sample_mean(p.n, [&](Index i) { return mean_fn(i, theta); });
  weight_diagnostics(p, [&](Index i) { return weight(i, theta); }, options.extreme_weight, res.diagnostics);

  const MomentSystem stacked = stack({score, scalar_block(mean_fn, mu)}, layout, p.n);
  res.theta = theta;
  res.alpha_hat = theta.segment(alpha, k);
  finish(res, stacked, options, mu, -1);
  return res;
}

EstimationResult estimate(Method method, const ShadowDataset& data, const ModelSpec& spec,
                          const EstimatorOptions& options) {
  switch (method) {
    case Method::kDR:
      return estimate_dr(data, spec, options);
    case Method::kIPW:
      return estimate_ipw(data, spec, options);
    case Method::kREG:
      return estimate_reg(data, spec, options);
    case Method::kCMP:
      return estimate_cmp(data, spec, options);
    case Method::kMARIPW:
      return estimate_mar_ipw(data, spec, options);
  }
  throw ConfigError("unknown method");
}

}  // namespace shadow
