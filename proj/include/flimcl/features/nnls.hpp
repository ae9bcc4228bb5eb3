#pragma once

#include <limits>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::features {

struct NnlsResult {
  Vector x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = true;
};

/// Lawson-Hanson active-set solver for  min ||A x - b||  subject to  x >= 0.
inline NnlsResult nnls(const Matrix& a, const Vector& b, int max_iter = 0) {
  const Eigen::Index n = a.cols();
  if (a.rows() != b.size()) throw InputError("nnls: dimension mismatch");
  if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 30);

  NnlsResult out;
  out.x = Vector::Zero(n);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  const double tol = 1e-12 * std::max<double>(1.0, a.cwiseAbs().maxCoeff()) *
                     static_cast<double>(std::max(a.rows(), n));

  auto solve_passive = [&](Vector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Matrix ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
    Vector zp = ap.colPivHouseholderQr().solve(b);
    z.setZero(n);
    for (std::size_t k = 0; k < idx.size(); ++k)
      z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  Vector w = a.transpose() * (b - a * out.x);
  Vector z(n);
  int iter = 0;
  while (true) {
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
        best = w(j);
        t = j;
      }
    if (t < 0) break;
    if (++iter > max_iter) {
      out.converged = false;
      break;
    }
    passive[static_cast<std::size_t>(t)] = 1;

    while (true) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) feasible = false;
      if (feasible) {
        out.x = z;
        break;
      }
      double step = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) {
          const double denom = out.x(j) - z(j);
          if (denom > 0) step = std::min(step, out.x(j) / denom);
        }
      if (!std::isfinite(step)) step = 0.0;
      out.x += step * (z - out.x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && out.x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = 0;
          out.x(j) = 0.0;
        }
    }
    w = a.transpose() * (b - a * out.x);
  }
  out.iterations = iter;
  out.residual_norm = (a * out.x - b).norm();
  return out;
}

/// Least-distance programming:  min ||z||  subject to  G z >= h.
/// Reduced to a nonnegative least-squares problem on the dual.
/// Returns false when the constraints are infeasible.
inline bool least_distance(const Matrix& g, const Vector& h, Vector& z) {
  const Eigen::Index n = g.cols();
  const Eigen::Index m = g.rows();
  Matrix e(n + 1, m);
  e.topRows(n) = g.transpose();
  e.row(n) = h.transpose();
  Vector f = Vector::Zero(n + 1);
  f(n) = 1.0;
  const NnlsResult sol = nnls(e, f);
  const Vector r = e * sol.x - f;
  if (sol.residual_norm < 1e-12 || std::abs(r(n)) < 1e-14) return false;
  z = -r.head(n) / r(n);
  return true;
}

}  // namespace flimcl::features
