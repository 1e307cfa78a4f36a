#include "shadowmnar/design.hpp"

#include "shadowmnar/errors.hpp"

#include <algorithm>
#include <cctype>

namespace shadow {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int column_index(std::string_view name, const std::vector<std::string>& names,
                 std::string_view formula) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ConfigError("unknown column '" + std::string(name) + "' in design formula '" +
                      std::string(formula) + "'");
  }
  return static_cast<int>(it - names.begin());
}

}  // namespace

double Term::evaluate(std::span<const double> x) const {
  switch (kind) {
    case Kind::kIntercept:
      return 1.0;
    case Kind::kLinear:
      return x[first];
    case Kind::kSquare:
      return x[first] * x[first];
    case Kind::kProduct:
      return x[first] * x[second];
  }
  return 0.0;
}

Design::Design(std::vector<Term> terms, std::vector<std::string> covariate_names)
    : terms_(std::move(terms)), names_(std::move(covariate_names)) {}

Design Design::parse(std::string_view formula, const std::vector<std::string>& names) {
  std::vector<Term> terms;
  std::string_view rest = formula;
  while (true) {
    const auto plus = rest.find('+');
    const std::string_view token = trim(rest.substr(0, plus));
    if (token.empty()) throw ConfigError("empty term in design formula '" + std::string(formula) + "'");

    Term term;
    if (token == "1") {
      term.kind = Term::Kind::kIntercept;
    } else if (const auto caret = token.find('^'); caret != std::string_view::npos) {
      if (trim(token.substr(caret + 1)) != "2") {
        throw ConfigError("only squares are supported, got '" + std::string(token) + "'");
      }
      term.kind = Term::Kind::kSquare;
      term.first = column_index(trim(token.substr(0, caret)), names, formula);
    } else if (const auto star = token.find_first_of("*:"); star != std::string_view::npos) {
      term.kind = Term::Kind::kProduct;
      term.first = column_index(trim(token.substr(0, star)), names, formula);
      term.second = column_index(trim(token.substr(star + 1)), names, formula);
    } else {
      term.kind = Term::Kind::kLinear;
      term.first = column_index(token, names, formula);
    }
    if (std::find(terms.begin(), terms.end(), term) != terms.end()) {
      throw ConfigError("duplicate term '" + std::string(token) + "' in design formula");
    }
    terms.push_back(term);

    if (plus == std::string_view::npos) break;
    rest = rest.substr(plus + 1);
  }
  return Design(std::move(terms), names);
}

Design Design::intercept_plus_all(const std::vector<std::string>& names) {
  std::vector<Term> terms{Term{}};
  for (int j = 0; j < static_cast<int>(names.size()); ++j) {
    terms.push_back(Term{Term::Kind::kLinear, j, -1});
  }
  return Design(std::move(terms), names);
}

Eigen::VectorXd Design::evaluate(std::span<const double> x) const {
  Eigen::VectorXd out(terms_.size());
  evaluate_into(x, out);
  return out;
}

void Design::evaluate_into(std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) const {
  for (std::size_t k = 0; k < terms_.size(); ++k) out[k] = terms_[k].evaluate(x);
}

Eigen::MatrixXd Design::matrix(const Eigen::Ref<const Eigen::MatrixXd>& covariates) const {
  const Eigen::Index n = covariates.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const Term& t = terms_[k];
    auto col = out.col(static_cast<Eigen::Index>(k));
    switch (t.kind) {
      case Term::Kind::kIntercept:
        col.setOnes();
        break;
      case Term::Kind::kLinear:
        col = covariates.col(t.first);
        break;
      case Term::Kind::kSquare:
        col = covariates.col(t.first).array().square();
        break;
      case Term::Kind::kProduct:
        col = covariates.col(t.first).cwiseProduct(covariates.col(t.second));
        break;
    }
  }
  return out;
}

std::string Design::term_name(std::size_t k) const {
  const Term& t = terms_.at(k);
  auto name = [&](int j) {
    return j >= 0 && j < static_cast<int>(names_.size()) ? names_[j] : "x" + std::to_string(j);
  };
  switch (t.kind) {
    case Term::Kind::kIntercept:
      return "1";
    case Term::Kind::kLinear:
      return name(t.first);
    case Term::Kind::kSquare:
      return name(t.first) + "^2";
    case Term::Kind::kProduct:
      return name(t.first) + "*" + name(t.second);
  }
  return {};
}

std::vector<std::string> Design::term_names() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < terms_.size(); ++k) out.push_back(term_name(k));
  return out;
}

std::string Design::formula() const {
  std::string out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) out += " + ";
    out += term_name(k);
  }
  return out;
}

RankDeficientError::RankDeficientError(const std::string& what, std::vector<std::string> columns)
    : EstimationError([&] {
        std::string msg = what + ": collinear columns";
        for (const auto& c : columns) msg += " '" + c + "'";
        return msg;
      }()),
      columns_(std::move(columns)) {}

}  // namespace shadow
