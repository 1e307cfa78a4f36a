#include "shadowmnar/dataset.hpp"

#include "shadowmnar/errors.hpp"

#include <cmath>

namespace shadow {

Eigen::Index ShadowDataset::observed_count() const {
  return static_cast<Eigen::Index>(r.sum());
}

double ShadowDataset::missing_fraction() const {
  if (size() == 0) return 0.0;
  return 1.0 - static_cast<double>(observed_count()) / static_cast<double>(size());
}

Eigen::VectorXd ShadowDataset::outcome_or_zero() const {
  Eigen::VectorXd out(size());
  for (Eigen::Index i = 0; i < size(); ++i) out[i] = r[i] > 0.5 ? y[i] : 0.0;
  return out;
}

void ShadowDataset::validate() const {
  const Eigen::Index n = size();
  if (x.rows() != n || r.size() != n || y.size() != n) {
    throw DataError("dataset columns have inconsistent lengths");
  }
  if (x.cols() != static_cast<Eigen::Index>(covariate_names.size())) {
    throw DataError("covariate matrix width does not match covariate names");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(z[i])) throw DataError("non-finite shadow value in record " + std::to_string(i));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!std::isfinite(x(i, j))) {
        throw DataError("non-finite covariate '" + covariate_names[j] + "' in record " +
                        std::to_string(i));
      }
    }
    if (r[i] != 0.0 && r[i] != 1.0) throw DataError("response indicator not 0/1 in record " + std::to_string(i));
    if (r[i] == 1.0 && !std::isfinite(y[i])) {
      throw DataError("observed outcome is not finite in record " + std::to_string(i));
    }
  }
}

ShadowDataset ShadowDataset::permuted(const std::vector<Eigen::Index>& order) const {
  ShadowDataset out;
  out.covariate_names = covariate_names;
  out.shadow_name = shadow_name;
  out.outcome_name = outcome_name;
  const auto n = static_cast<Eigen::Index>(order.size());
  out.x.resize(n, x.cols());
  out.z.resize(n);
  out.r.resize(n);
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.x.row(i) = x.row(src);
    out.z[i] = z[src];
    out.r[i] = r[src];
    out.y[i] = y[src];
  }
  return out;
}

}  // namespace shadow
