#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::features {

/// Instrument response sampled on the waveform grid, normalized to unit sum.
struct Irf {
  std::vector<double> samples;
  double dt = 0.4;
};

inline constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;  // 2*sqrt(2 ln 2)

/// Gaussian IRF centred at `center_ns`. A zero FWHM yields a unit impulse at
/// the nearest sample to the centre.
inline Irf gaussian_irf(double fwhm_ns, double dt, std::size_t n,
                        double center_ns) {
  if (!std::isfinite(fwhm_ns) || fwhm_ns < 0)
    throw ParameterError("IRF FWHM must be finite and nonnegative");
  if (!(dt > 0)) throw ParameterError("IRF sample period must be positive");
  Irf irf{std::vector<double>(n, 0.0), dt};
  if (fwhm_ns == 0.0) {
    auto k = static_cast<std::size_t>(std::lround(center_ns / dt));
    if (k >= n) throw ParameterError("IRF centre lies outside the record");
    irf.samples[k] = 1.0;
    return irf;
  }
  const double sigma = fwhm_ns * kFwhmToSigma;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = (static_cast<double>(i) * dt - center_ns) / sigma;
    irf.samples[i] = std::exp(-0.5 * z * z);
    total += irf.samples[i];
  }
  if (!(total > 0)) throw ParameterError("IRF has no support on the record");
  for (auto& v : irf.samples) v /= total;
  return irf;
}

inline Irf delta_irf(double dt, std::size_t n) { return gaussian_irf(0.0, dt, n, 0.0); }

/// Causal discrete convolution truncated to `n` output samples.
inline std::vector<double> convolve(std::span<const double> a,
                                    std::span<const double> b, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < a.size() && i < n; ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t lim = std::min(b.size(), n - i);
    for (std::size_t j = 0; j < lim; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

}  // namespace flimcl::features
