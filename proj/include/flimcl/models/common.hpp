#pragma once

#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::models {

/// Row-wise softmax with the usual max shift.
inline Matrix softmax_rows(const Matrix& z) {
  Matrix p = z.colwise() - z.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().eval().array();
  return p;
}

inline int count_classes(const std::vector<Label>& y) {
  int c = 0;
  for (Label v : y) c = std::max(c, v + 1);
  return c;
}

/// Weights n / (C * n_c) so every class carries equal total weight; classes
/// absent from y get weight 0.
inline std::vector<double> balanced_class_weights(const std::vector<Label>& y, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (Label v : y) counts.at(static_cast<std::size_t>(v)) += 1.0;
  int present = 0;
  for (double c : counts) present += c > 0 ? 1 : 0;
  std::vector<double> w(counts.size(), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) w[c] = static_cast<double>(y.size()) / (present * counts[c]);
  return w;
}

inline void check_training_input(const Matrix& x, const std::vector<Label>& y, int num_classes) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()))
    throw InputError("feature rows and labels differ in length");
  if (x.rows() == 0) throw TrainingError("empty training set");
  if (!x.allFinite()) throw InputError("non-finite feature values");
  std::vector<char> seen(static_cast<std::size_t>(num_classes), 0);
  for (Label v : y) {
    if (v < 0 || v >= num_classes) throw InputError("label out of range");
    seen[static_cast<std::size_t>(v)] = 1;
  }
  int present = 0;
  for (char s : seen) present += s;
  if (present < 2) throw TrainingError("training data contains fewer than two classes");
}

}  // namespace flimcl::models
