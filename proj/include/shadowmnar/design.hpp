#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shadow {

/// One column of a design vector built from raw covariates.
struct Term {
  enum class Kind { kIntercept, kLinear, kSquare, kProduct };
  Kind kind = Kind::kIntercept;
  int first = -1;
  int second = -1;

  double evaluate(std::span<const double> x) const;
  friend bool operator==(const Term&, const Term&) = default;
};

/// Covariate-to-design mapping d(x).
///
/// Formulas are a sum of terms: `1` (intercept), `col`, `col^2`, and
/// pairwise products `a*b` (or `a:b`). Column names resolve against the
/// covariate names supplied at parse time.
class Design {
 public:
  Design() = default;
  Design(std::vector<Term> terms, std::vector<std::string> covariate_names);

  static Design parse(std::string_view formula, const std::vector<std::string>& covariate_names);
  /// `1 + c1 + c2 + ...` over every covariate.
  static Design intercept_plus_all(const std::vector<std::string>& covariate_names);

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  Eigen::VectorXd evaluate(std::span<const double> x) const;
  void evaluate_into(std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) const;
  /// n x size() matrix of rows d(x_i) for a row-major covariate matrix.
  Eigen::MatrixXd matrix(const Eigen::Ref<const Eigen::MatrixXd>& covariates) const;

  std::string term_name(std::size_t k) const;
  std::vector<std::string> term_names() const;
  std::string formula() const;

  friend bool operator==(const Design& a, const Design& b) { return a.terms_ == b.terms_; }

 private:
  std::vector<Term> terms_;
  std::vector<std::string> names_;
};

}  // namespace shadow
