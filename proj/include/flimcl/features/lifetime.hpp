#pragma once

#include <span>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::features {

/// Composite Simpson weights for n equally spaced samples; when n is even the
/// final interval falls back to the trapezoid rule.
inline std::vector<double> quadrature_weights(std::size_t n, double dt) {
  std::vector<double> w(n, 0.0);
  if (n == 1) {
    w[0] = dt;
    return w;
  }
  const std::size_t m = (n % 2 == 1) ? n : n - 1;  // odd count for Simpson
  if (m >= 3) {
    for (std::size_t i = 0; i < m; ++i)
      w[i] = (i == 0 || i == m - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    for (std::size_t i = 0; i < m; ++i) w[i] *= dt / 3.0;
  }
  if (m < n || m < 3) {
    w[n - 2] += 0.5 * dt;
    w[n - 1] += 0.5 * dt;
  }
  return w;
}

/// Intensity-weighted mean lifetime (LT) of a decay starting at t = 0:
/// the ratio of integrals of t*h(t) and h(t).
inline double mean_lifetime(std::span<const double> h, double dt) {
  if (h.empty()) throw DegenerateInputError("empty decay");
  const auto w = quadrature_weights(h.size(), dt);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] < 0) throw InputError("mean lifetime requires a nonnegative decay");
    num += w[i] * static_cast<double>(i) * dt * h[i];
    den += w[i] * h[i];
  }
  if (!(den > 0)) throw DegenerateInputError("all-zero decay");
  return num / den;
}

/// Amplitude-weighted lifetime sum(a_i tau_i) / sum(a_i), estimated as the
/// decay integral over its value at t = 0.
inline double amplitude_weighted_lifetime(std::span<const double> h, double dt) {
  if (h.empty() || !(h[0] > 0))
    throw DegenerateInputError("amplitude-weighted lifetime needs h(0) > 0");
  const auto w = quadrature_weights(h.size(), dt);
  double area = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) area += w[i] * h[i];
  return area / h[0];
}

}  // namespace flimcl::features
