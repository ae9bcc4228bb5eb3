#pragma once

#include <numeric>
#include <vector>

#include "flimcl/models/common.hpp"

namespace flimcl::models {

struct SoftmaxOptions {
  double l2 = 1e-3;
  int iterations = 400;
};

/// Multinomial logistic regression, z = x W + b.
struct SoftmaxRegression {
  Matrix weights;  // d x C
  Vector bias;     // C

  Matrix predict_proba(const Matrix& x) const {
    return softmax_rows((x * weights).rowwise() + bias.transpose());
  }
};

/// Nesterov-accelerated gradient descent on the weighted cross-entropy with
/// step 1/L, where L bounds the Hessian (softmax curvature is at most 1/2).
inline SoftmaxRegression train_softmax(const Matrix& x, const std::vector<Label>& y,
                                       const std::vector<double>& w, int num_classes,
                                       const SoftmaxOptions& opt) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(wsum > 0)) throw TrainingError("sample weights sum to zero");
  Vector wn(n);
  for (Eigen::Index i = 0; i < n; ++i) wn(i) = w[static_cast<std::size_t>(i)] / wsum;

  Matrix xa(n, d + 1);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Matrix y1 = Matrix::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) y1(i, y[static_cast<std::size_t>(i)]) = 1.0;

  // largest eigenvalue of xa' diag(wn) xa by power iteration
  const Matrix gram = xa.transpose() * wn.asDiagonal() * xa;
  Vector v = Vector::Ones(d + 1).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector u = gram * v;
    lambda = u.norm();
    if (lambda == 0.0) break;
    v = u / lambda;
  }
  const double step = 1.0 / (0.5 * lambda + opt.l2 + 1e-12);

  Matrix theta = Matrix::Zero(d + 1, num_classes), prev = theta, look = theta;
  for (int it = 1; it <= opt.iterations; ++it) {
    const Matrix p = softmax_rows(xa * look);
    Matrix g = xa.transpose() * (wn.asDiagonal() * (p - y1));
    g.topRows(d) += opt.l2 * look.topRows(d);
    prev = theta;
    theta = look - step * g;
    look = theta + (double(it - 1) / double(it + 2)) * (theta - prev);
  }
  if (!theta.allFinite()) throw NumericalError("softmax regression diverged");
  SoftmaxRegression out;
  out.weights = theta.topRows(d);
  out.bias = theta.row(d).transpose();
  return out;
}

}  // namespace flimcl::models
