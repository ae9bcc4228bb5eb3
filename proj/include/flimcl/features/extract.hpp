#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flimcl/features/deconvolution.hpp"
#include "flimcl/features/laguerre.hpp"
#include "flimcl/features/lifetime.hpp"
#include "flimcl/features/phasor.hpp"
#include "flimcl/waveform.hpp"

namespace flimcl::features {

enum class PhasorSource { Decay, RawWaveform };

/// Ordered feature layout: per band [LT, LC_1..LC_L, g1, s1, g2, s2, g3, s3],
/// optionally followed by one intensity ratio per band.
struct FeatureSchema {
  std::vector<Band> bands{Band::A, Band::B};
  int laguerre_order = 12;
  int harmonics = 3;
  bool intensity_ratio = false;

  std::size_t per_band() const {
    return 1 + static_cast<std::size_t>(laguerre_order) + 2 * static_cast<std::size_t>(harmonics);
  }
  std::size_t dimension() const {
    return bands.size() * per_band() + (intensity_ratio ? bands.size() : 0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    char buf[32];
    for (Band b : bands) {
      const auto prefix = band_name(b) + "_";
      out.push_back(prefix + "LT");
      for (int l = 1; l <= laguerre_order; ++l) {
        std::snprintf(buf, sizeof buf, "LC%02d", l);
        out.push_back(prefix + buf);
      }
      for (int k = 1; k <= harmonics; ++k) {
        out.push_back(prefix + "Ph" + std::to_string(k) + "g");
        out.push_back(prefix + "Ph" + std::to_string(k) + "s");
      }
    }
    if (intensity_ratio)
      for (Band b : bands) out.push_back(band_name(b) + "_IR");
    return out;
  }
};

struct BasisConfig {
  double alpha = 0.55;
  DeconvolutionOptions deconvolution{};
  PhasorSource phasor_source = PhasorSource::Decay;
};

/// Turns per-band raw waveforms into one feature vector. Immutable after
/// construction; share one instance across points.
class FeatureExtractor {
 public:
  FeatureExtractor(FeatureSchema schema, const Irf& irf, std::size_t samples,
                   BasisConfig config = {})
      : schema_(std::move(schema)),
        config_(config),
        deconvolver_(std::make_shared<Deconvolver>(
            irf, laguerre_basis(schema_.laguerre_order, config.alpha, samples),
            config.deconvolution)) {}

  const FeatureSchema& schema() const { return schema_; }
  const Deconvolver& deconvolver() const { return *deconvolver_; }

  std::vector<double> extract(std::span<const Waveform> waveforms) const {
    std::vector<double> out;
    out.reserve(schema_.dimension());
    std::vector<double> intensity;
    for (Band band : schema_.bands) {
      const Waveform* wf = nullptr;
      for (const auto& w : waveforms)
        if (w.band == band) wf = &w;
      if (wf == nullptr) throw InputError("missing waveform for " + band_name(band));
      wf->validate();

      const LaguerreFit fit = deconvolver_->fit(*wf);
      out.push_back(mean_lifetime(fit.decay, wf->dt));
      out.insert(out.end(), fit.coefficients.begin(), fit.coefficients.end());
      const auto& source =
          config_.phasor_source == PhasorSource::Decay ? fit.decay : wf->samples;
      const PhasorSet ph = phasor_harmonics(source, wf->dt, schema_.harmonics);
      for (const auto& p : ph.harmonics) {
        out.push_back(p.g);
        out.push_back(p.s);
      }
      double total = 0.0;
      for (double v : wf->samples) total += v;
      intensity.push_back(total);
    }
    if (schema_.intensity_ratio) {
      double sum = 0.0;
      for (double v : intensity) sum += v;
      for (double v : intensity) out.push_back(sum != 0.0 ? v / sum : 0.0);
    }
    return out;
  }

 private:
  FeatureSchema schema_;
  BasisConfig config_;
  std::shared_ptr<const Deconvolver> deconvolver_;
};

}  // namespace flimcl::features
