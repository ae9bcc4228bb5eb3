#pragma once

#include "flimcl/common.hpp"

namespace flimcl::models {

/// Per-feature z-scoring. Statistics are fitted on a training split only and
/// then frozen inside the trained model.
struct Standardizer {
  Vector mean;
  Vector scale;
  std::size_t fitted_rows = 0;

  static Standardizer fit(const Matrix& x) {
    if (x.rows() == 0) throw InputError("cannot standardize an empty matrix");
    Standardizer s;
    s.fitted_rows = static_cast<std::size_t>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().mean();
      const double sd = std::sqrt(var);
      // constant columns pass through centered but unscaled
      s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
    }
    return s;
  }

  Eigen::Index dimension() const { return mean.size(); }

  Matrix transform(const Matrix& x) const {
    if (x.cols() != mean.size())
      throw InputError("feature dimension " + std::to_string(x.cols()) + " does not match model (" +
                       std::to_string(mean.size()) + ")");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

}  // namespace flimcl::models
