#pragma once

#include <string>
#include <vector>

#include "flimcl/attribution/shapley.hpp"
#include "flimcl/eval/metrics.hpp"

namespace flimcl::attribution {

enum class ImportanceMetric { Accuracy, MeanAuc };

inline ImportanceMetric parse_importance_metric(const std::string& s) {
  if (s == "accuracy") return ImportanceMetric::Accuracy;
  if (s == "mean_auc") return ImportanceMetric::MeanAuc;
  throw ConfigError("unknown importance metric '" + s + "' (expected accuracy or mean_auc)");
}

inline double score(const Matrix& p, const std::vector<Label>& y, ImportanceMetric m) {
  const auto mm = eval::model_metrics(p, y);
  return m == ImportanceMetric::Accuracy ? mm.accuracy : mm.mean_auc;
}

/// Mean metric drop when the columns in `cols` are shuffled together (one
/// shared row permutation), averaged over repeats.
inline double group_importance(const BatchModel& model, const Matrix& x, const std::vector<Label>& y,
                               const std::vector<Eigen::Index>& cols, ImportanceMetric metric, int repeats,
                               std::uint64_t seed) {
  if (repeats < 1) throw ParameterError("need at least one repeat");
  const double base = score(model(x), y, metric);
  double drop = 0.0;
  for (int r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, r));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xs = x;
    for (auto c : cols)
      for (Eigen::Index i = 0; i < x.rows(); ++i) xs(i, c) = x(perm[static_cast<std::size_t>(i)], c);
    drop += base - score(model(xs), y, metric);
  }
  return drop / repeats;
}

/// Per-feature permutation importance; feature j uses sub-seed (seed, j).
inline Vector permutation_importance(const BatchModel& model, const Matrix& x, const std::vector<Label>& y,
                                     ImportanceMetric metric, int repeats, std::uint64_t seed) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) throw InputError("feature rows and labels differ in length");
  Vector out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out(j) = group_importance(model, x, y, {j}, metric, repeats, derive_seed(seed, j));
  return out;
}

}  // namespace flimcl::attribution
