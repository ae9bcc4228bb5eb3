#pragma once

#include <cmath>

#include "flimcl/common.hpp"

namespace flimcl::features {

/// Discrete-time Laguerre functions on an N-sample record, orthonormalized
/// over that finite record (columns of `values`).
struct LaguerreBasis {
  int order = 0;
  double alpha = 0.0;
  Matrix values;  // N x order

  std::size_t samples() const { return static_cast<std::size_t>(values.rows()); }
};

/// Raw discrete Laguerre sequences from the standard two-term recursion.
/// Exactly orthonormal only on an infinite record.
inline Matrix laguerre_sequences(int order, double alpha, std::size_t n) {
  Matrix b = Matrix::Zero(static_cast<Eigen::Index>(n), order);
  const double sa = std::sqrt(alpha);
  b(0, 0) = std::sqrt(1.0 - alpha);
  for (Eigen::Index i = 1; i < b.rows(); ++i) b(i, 0) = sa * b(i - 1, 0);
  for (int j = 1; j < order; ++j) {
    b(0, j) = sa * b(0, j - 1);
    for (Eigen::Index i = 1; i < b.rows(); ++i)
      b(i, j) = sa * b(i - 1, j) + sa * b(i, j - 1) - b(i - 1, j - 1);
  }
  return b;
}

inline LaguerreBasis laguerre_basis(int order, double alpha, std::size_t n) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError("Laguerre alpha must lie in (0, 1)");
  if (order < 1 || static_cast<std::size_t>(order) > n)
    throw ParameterError("Laguerre order must satisfy 1 <= L <= N");

  Matrix raw = laguerre_sequences(order, alpha, n);
  // Householder QR re-orthonormalizes the truncated sequences; the sign fix
  // keeps each column aligned with its raw Laguerre counterpart.
  Eigen::HouseholderQR<Matrix> qr(raw);
  Matrix q = qr.householderQ() * Matrix::Identity(raw.rows(), order);
  Matrix r = qr.matrixQR().topRows(order).triangularView<Eigen::Upper>();
  for (int j = 0; j < order; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;

  return LaguerreBasis{order, alpha, std::move(q)};
}

/// max |B^T B - I|
inline double orthonormality_error(const LaguerreBasis& basis) {
  const Matrix gram = basis.values.transpose() * basis.values;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

}  // namespace flimcl::features
