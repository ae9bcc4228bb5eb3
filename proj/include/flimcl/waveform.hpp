#pragma once

#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl {

enum class Band { A = 0, B = 1 };

inline constexpr int kBandCount = 2;

inline std::string band_name(Band b) { return b == Band::A ? "bandA" : "bandB"; }

inline Band parse_band(const std::string& s) {
  if (s == "bandA" || s == "band-A" || s == "A") return Band::A;
  if (s == "bandB" || s == "band-B" || s == "B") return Band::B;
  throw InputError("unknown band '" + s + "'");
}

inline constexpr std::size_t kMinWaveformLength = 64;

/// A digitized fluorescence decay for one point in one spectral band.
struct Waveform {
  std::vector<double> samples;
  double dt = 0.4;  // ns, 2.5 GS/s digitizer
  Band band = Band::A;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (samples.size() < kMinWaveformLength)
      throw InputError("waveform shorter than " +
                       std::to_string(kMinWaveformLength) + " samples");
    if (!(dt > 0) || !std::isfinite(dt))
      throw InputError("waveform sample period must be positive");
    if (!all_finite(samples)) throw InputError("waveform has non-finite samples");
  }
};

}  // namespace flimcl
