#pragma once

#include <array>
#include <numbers>
#include <span>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::features {

struct PhasorPoint {
  double g = 0.0;
  double s = 0.0;
};

/// Phasor coordinates (Ph) for harmonics 1..n.
struct PhasorSet {
  std::vector<PhasorPoint> harmonics;

  const PhasorPoint& operator[](std::size_t n) const { return harmonics.at(n - 1); }

  /// (g - 1/2)^2 + s^2 - 1/4 for harmonic n; <= 0 inside the universal circle.
  double semicircle_excess(std::size_t n = 1) const {
    const auto& p = (*this)[n];
    return (p.g - 0.5) * (p.g - 0.5) + p.s * p.s - 0.25;
  }
};

/// Fourier coefficients over one record, with the wrap-around jump between
/// h[0] and h[N-1] split in half (trapezoid-consistent periodic sum). For a
/// sampled exponential this matches the continuous-time phasor to O(dt^2).
inline PhasorSet phasor_harmonics(std::span<const double> h, double dt,
                                  int n_max = 3) {
  if (h.empty()) throw DegenerateInputError("empty decay");
  if (!(dt > 0)) throw ParameterError("sample period must be positive");
  if (n_max < 1) throw ParameterError("need at least one harmonic");
  const std::size_t n = h.size();
  const double jump = 0.5 * (h.front() - h.back());

  double dc = -jump;
  for (double v : h) dc += v;
  if (!(dc > 0)) throw DegenerateInputError("zero DC component");

  PhasorSet out;
  for (int k = 1; k <= n_max; ++k) {
    double re = -jump, im = 0.0;
    const double step = 2.0 * std::numbers::pi * k / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = step * static_cast<double>(i);
      re += h[i] * std::cos(phase);
      im -= h[i] * std::sin(phase);
    }
    out.harmonics.push_back({re / dc, -im / dc});
  }
  return out;
}

/// Angular frequency of harmonic n for a record of `samples` points (rad/ns).
inline double harmonic_omega(std::size_t samples, double dt, int n = 1) {
  return 2.0 * std::numbers::pi * n / (static_cast<double>(samples) * dt);
}

}  // namespace flimcl::features
