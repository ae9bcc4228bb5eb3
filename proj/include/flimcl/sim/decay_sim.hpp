#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "flimcl/common.hpp"
#include "flimcl/dataset.hpp"
#include "flimcl/features/signal.hpp"
#include "flimcl/waveform.hpp"

namespace flimcl::sim {

/// Bi-exponential decay parameters of one class in one band. `fraction_*`
/// is the amplitude fraction of the fast (tau1) component.
struct BandDecay {
  double tau1 = 1.0;
  double tau2 = 4.0;
  double fraction_mean = 0.5;
  double fraction_sd = 0.05;
};

/// Class-conditional decay model; parameterizes the optical contrast between
/// tumor cellular density classes.
struct ClassDecayModel {
  int class_index = 0;
  std::string name;
  std::array<BandDecay, kBandCount> bands{};
  double amplitude_mean = 1.0;

  const BandDecay& band(Band b) const { return bands[static_cast<std::size_t>(b)]; }

  void validate() const {
    for (const auto& b : bands) {
      if (!(b.tau1 > 0 && b.tau1 < b.tau2) || !std::isfinite(b.tau2))
        throw ConfigError("class '" + name + "': lifetimes must satisfy 0 < tau1 < tau2");
      if (!(b.fraction_mean >= 0 && b.fraction_mean <= 1))
        throw ConfigError("class '" + name + "': fraction_mean outside [0,1]");
      if (!(b.fraction_sd >= 0) || !std::isfinite(b.fraction_sd))
        throw ConfigError("class '" + name + "': fraction_sd must be >= 0");
    }
    if (!(amplitude_mean > 0) || !std::isfinite(amplitude_mean))
      throw ConfigError("class '" + name + "': amplitude_mean must be positive");
  }
};

/// Realized parameters of one decay.
struct DecayParams {
  double tau1 = 1.0;
  double tau2 = 4.0;
  double fraction = 0.5;
  double amplitude = 1.0;
};

struct WaveformSettings {
  double dt = 0.4;            // ns
  std::size_t samples = 200;  // 80 ns record
  double irf_fwhm = 1.0;      // ns; 0 means an ideal impulse
  double irf_center = 3.0;    // ns
};

inline features::Irf make_irf(const WaveformSettings& s) {
  return features::gaussian_irf(s.irf_fwhm, s.dt, s.samples, s.irf_center);
}

/// Noiseless fluorescence impulse response a1 e^{-t/tau1} + a2 e^{-t/tau2}.
inline std::vector<double> decay_curve(const DecayParams& p, double dt, std::size_t n) {
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    h[i] = p.amplitude * (p.fraction * std::exp(-t / p.tau1) +
                          (1.0 - p.fraction) * std::exp(-t / p.tau2));
  }
  return h;
}

/// IRF-convolved decay plus zero-mean Gaussian noise at `snr_db` (mean signal
/// power over noise power). `amplitude_scale` attenuates the signal after the
/// noise level is fixed, so attenuation lowers the effective SNR.
inline Waveform synth_waveform(const DecayParams& p, Band band,
                               const WaveformSettings& settings, double snr_db,
                               std::uint64_t seed, double amplitude_scale = 1.0) {
  if (!std::isfinite(p.tau1) || !std::isfinite(p.tau2) || !std::isfinite(p.fraction) ||
      !std::isfinite(p.amplitude) || std::isnan(snr_db) || !std::isfinite(amplitude_scale))
    throw ParameterError("synth_waveform: non-finite parameter");
  if (!(p.tau1 > 0 && p.tau2 > 0)) throw ParameterError("lifetimes must be positive");
  if (!(settings.irf_fwhm >= 0)) throw ParameterError("IRF FWHM must be nonnegative");
  if (snr_db == -INFINITY) throw ParameterError("snr_db must not be -inf");

  const auto irf = make_irf(settings);
  const auto h = decay_curve(p, settings.dt, settings.samples);
  Waveform wf{features::convolve(irf.samples, h, settings.samples), settings.dt, band};

  double sd = 0.0;
  if (std::isfinite(snr_db)) {
    double power = 0.0;
    for (double v : wf.samples) power += v * v;
    power /= static_cast<double>(wf.samples.size());
    sd = std::sqrt(power) / std::pow(10.0, snr_db / 20.0);
  }
  for (auto& v : wf.samples) v *= amplitude_scale;
  if (sd > 0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sd);
    for (auto& v : wf.samples) v += noise(rng);
  }
  return wf;
}

/// Waveform at the class model's mean parameters.
inline Waveform synth_waveform(const ClassDecayModel& model, Band band,
                               const WaveformSettings& settings, double snr_db,
                               std::uint64_t seed) {
  const auto& b = model.band(band);
  return synth_waveform(DecayParams{b.tau1, b.tau2, b.fraction_mean, model.amplitude_mean},
                        band, settings, snr_db, seed);
}

// ---------------------------------------------------------------------------
// Point-level randomness and confounders

struct Variability {
  double patient_fraction_sd = 0.0;  // additive, shared by a patient's points
  double margin_fraction_sd = 0.0;   // additive, shared by a margin's points
  double tau_jitter = 0.0;           // relative lifetime sd per point
  double amplitude_log_sd = 0.0;
  double snr_db = 40.0;
  double snr_db_sd = 0.0;
};

/// Standardized random draws for one point; kept separate from the class
/// model so that a confounded point can be re-realized under another model
/// with identical randomness.
struct PointDraw {
  double fraction_shift = 0.0;
  std::array<double, kBandCount> fraction_z{};
  std::array<std::array<double, 2>, kBandCount> tau_z{};
  double amplitude_z = 0.0;
  double snr_z = 0.0;
};

inline DecayParams realize(const ClassDecayModel& model, Band band, const PointDraw& d,
                           const Variability& v) {
  const auto bi = static_cast<std::size_t>(band);
  const auto& b = model.band(band);
  DecayParams p;
  p.tau1 = b.tau1 * std::exp(v.tau_jitter * d.tau_z[bi][0]);
  p.tau2 = b.tau2 * std::exp(v.tau_jitter * d.tau_z[bi][1]);
  p.fraction = std::clamp(b.fraction_mean + d.fraction_shift + b.fraction_sd * d.fraction_z[bi],
                          0.0, 1.0);
  p.amplitude = model.amplitude_mean * std::exp(v.amplitude_log_sd * d.amplitude_z);
  return p;
}

/// Linear interpolation of two class models; weight 0 -> a, 1 -> b.
inline ClassDecayModel interpolate(const ClassDecayModel& a, const ClassDecayModel& b, double w) {
  ClassDecayModel out = a;
  auto mix = [w](double x, double y) { return (1.0 - w) * x + w * y; };
  for (std::size_t k = 0; k < out.bands.size(); ++k) {
    out.bands[k].tau1 = mix(a.bands[k].tau1, b.bands[k].tau1);
    out.bands[k].tau2 = mix(a.bands[k].tau2, b.bands[k].tau2);
    out.bands[k].fraction_mean = mix(a.bands[k].fraction_mean, b.bands[k].fraction_mean);
    out.bands[k].fraction_sd = mix(a.bands[k].fraction_sd, b.bands[k].fraction_sd);
  }
  out.amplitude_mean = mix(a.amplitude_mean, b.amplitude_mean);
  return out;
}

enum class ConfounderKind { GreyMatter, Blood };

inline std::string confounder_name(ConfounderKind k) {
  return k == ConfounderKind::GreyMatter ? "grey_matter" : "blood";
}

inline ConfounderKind parse_confounder_kind(const std::string& s) {
  if (s == "grey_matter") return ConfounderKind::GreyMatter;
  if (s == "blood") return ConfounderKind::Blood;
  throw ParameterError("unknown confounder kind '" + s + "'");
}

struct ConfounderSpec {
  ConfounderKind kind = ConfounderKind::GreyMatter;
  double magnitude = 0.0;          // [0,1]
  double affected_fraction = 1.0;  // of points in an affected margin
};

/// Everything needed to render one point's waveforms.
struct PointRecipe {
  ClassDecayModel model;
  PointDraw draw;
  double snr_db = 40.0;
  double amplitude_scale = 1.0;
  std::vector<std::string> tags;

  Waveform render(Band band, const WaveformSettings& s, const Variability& v,
                  std::uint64_t seed) const {
    return synth_waveform(realize(model, band, draw, v), band, s, snr_db, seed,
                          amplitude_scale);
  }
};

inline int neighbor_class(int cls, int num_classes, int direction) {
  int nb = cls + (direction >= 0 ? 1 : -1);
  if (nb < 0 || nb >= num_classes) nb = cls - (direction >= 0 ? 1 : -1);
  return std::clamp(nb, 0, num_classes - 1);
}

/// Applies a confounder to one point. Grey matter moves the decay model toward
/// the neighboring class by `magnitude`; blood attenuates the signal by
/// (1 - 0.8 magnitude) with the noise floor unchanged.
inline PointRecipe apply_confounder(PointRecipe point, const ConfounderSpec& spec,
                                    const std::vector<ClassDecayModel>& ladder,
                                    int direction) {
  if (!(spec.magnitude >= 0 && spec.magnitude <= 1))
    throw ParameterError("confounder magnitude must lie in [0,1]");
  if (spec.magnitude == 0.0) return point;
  switch (spec.kind) {
    case ConfounderKind::GreyMatter: {
      const int cls = point.model.class_index;
      const int nb = neighbor_class(cls, static_cast<int>(ladder.size()), direction);
      const int keep_index = point.model.class_index;
      point.model = interpolate(point.model, ladder.at(static_cast<std::size_t>(nb)),
                                spec.magnitude);
      point.model.class_index = keep_index;
      break;
    }
    case ConfounderKind::Blood:
      point.amplitude_scale *= (1.0 - 0.8 * spec.magnitude);
      break;
  }
  point.tags.push_back(confounder_name(spec.kind));
  return point;
}

/// Margin-level variant: exactly round(affected_fraction * n) points, chosen
/// deterministically from `seed`, receive the confounder.
inline void apply_confounder(std::vector<PointRecipe>& margin, const ConfounderSpec& spec,
                             const std::vector<ClassDecayModel>& ladder, int direction,
                             std::uint64_t seed) {
  if (!(spec.affected_fraction >= 0 && spec.affected_fraction <= 1))
    throw ParameterError("affected fraction must lie in [0,1]");
  const auto count = static_cast<std::size_t>(
      std::llround(spec.affected_fraction * static_cast<double>(margin.size())));
  std::vector<std::size_t> order(margin.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < count; ++i)
    margin[order[i]] = apply_confounder(margin[order[i]], spec, ladder, direction);
}

// ---------------------------------------------------------------------------
// Datasets

struct ConfounderRate {
  double margin_probability = 0.0;
  ConfounderSpec spec;
};

struct SimConfig {
  int patients = 30;
  std::pair<int, int> margins_per_patient{3, 10};
  int total_margins = 0;  // 0: each patient draws from margins_per_patient
  std::pair<int, int> points_per_margin{15, 35};
  std::vector<ClassDecayModel> classes;
  std::vector<double> class_proportions;  // empty: uniform
  WaveformSettings waveform;
  Variability variability;
  std::vector<ConfounderRate> confounders;
  int grey_matter_direction = 1;
  std::uint64_t seed = 0;
};

struct SynthResult {
  DatasetManifest manifest;
  std::vector<std::array<Waveform, kBandCount>> waveforms;  // aligned with manifest.points
};

/// Largest-remainder apportionment of `total` items by `weights`.
inline std::vector<int> apportion(const std::vector<double>& weights, int total) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("class proportions must be >= 0");
    sum += w;
  }
  if (!(sum > 0)) throw ConfigError("class proportions sum to zero");
  std::vector<int> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / sum * total;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += counts[i];
    rem.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) counts[rem[k % rem.size()].second]++;
  return counts;
}

inline void validate(const SimConfig& c) {
  if (c.patients < 2) throw ConfigError("simulator needs at least 2 patients");
  if (c.classes.size() < 2) throw ConfigError("class roster needs at least 2 classes");
  for (std::size_t i = 0; i < c.classes.size(); ++i) {
    c.classes[i].validate();
    if (c.classes[i].class_index != static_cast<int>(i))
      throw ConfigError("class models must be listed in class-index order");
  }
  if (!c.class_proportions.empty() && c.class_proportions.size() != c.classes.size())
    throw ConfigError("class_proportions length differs from the class roster");
  auto [mlo, mhi] = c.margins_per_patient;
  auto [plo, phi] = c.points_per_margin;
  if (mlo < 1 || mhi < mlo) throw ConfigError("invalid margins_per_patient range");
  if (plo < 1 || phi < plo) throw ConfigError("invalid points_per_margin range");
  if (c.total_margins != 0 &&
      (c.total_margins < c.patients * mlo || c.total_margins > c.patients * mhi))
    throw ConfigError("total_margins incompatible with margins_per_patient range");
  if (c.waveform.samples < kMinWaveformLength) throw ConfigError("record shorter than 64 samples");
  if (!(c.waveform.dt > 0)) throw ConfigError("dt must be positive");
  for (const auto& cf : c.confounders)
    if (!(cf.margin_probability >= 0 && cf.margin_probability <= 1))
      throw ConfigError("confounder margin_probability outside [0,1]");
}

inline PointDraw draw_point(std::uint64_t seed, double shift) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  PointDraw d;
  d.fraction_shift = shift;
  for (auto& f : d.fraction_z) f = z(rng);
  for (auto& band : d.tau_z)
    for (auto& t : band) t = z(rng);
  d.amplitude_z = z(rng);
  d.snr_z = z(rng);
  return d;
}

/// Seeded synthetic dataset: margins get class labels (apportioned exactly by
/// the requested proportions), every point inherits its margin's label, and
/// per-margin confounders perturb a subset of points.
inline SynthResult synth_dataset(const SimConfig& config) {
  validate(config);
  Rng rng(derive_seed(config.seed, 0x5EED));

  // margins per patient
  std::vector<int> per_patient(static_cast<std::size_t>(config.patients));
  auto [mlo, mhi] = config.margins_per_patient;
  if (config.total_margins == 0) {
    std::uniform_int_distribution<int> d(mlo, mhi);
    for (auto& m : per_patient) m = d(rng);
  } else {
    std::fill(per_patient.begin(), per_patient.end(), mlo);
    int remaining = config.total_margins - config.patients * mlo;
    std::uniform_int_distribution<int> pick(0, config.patients - 1);
    while (remaining > 0) {
      auto& m = per_patient[static_cast<std::size_t>(pick(rng))];
      if (m < mhi) {
        ++m;
        --remaining;
      }
    }
  }
  const int total = std::accumulate(per_patient.begin(), per_patient.end(), 0);

  const auto weights = config.class_proportions.empty()
                           ? std::vector<double>(config.classes.size(), 1.0)
                           : config.class_proportions;
  const auto counts = apportion(weights, total);
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < 1)
      throw ConfigError("class '" + config.classes[c].name + "' receives no margins");
  std::vector<Label> margin_labels;
  for (std::size_t c = 0; c < counts.size(); ++c)
    margin_labels.insert(margin_labels.end(), static_cast<std::size_t>(counts[c]),
                         static_cast<Label>(c));
  std::shuffle(margin_labels.begin(), margin_labels.end(), rng);

  SynthResult out;
  auto& man = out.manifest;
  for (const auto& c : config.classes) man.class_names.push_back(c.name);

  std::uniform_int_distribution<int> points_dist(config.points_per_margin.first,
                                                 config.points_per_margin.second);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<PointRecipe> recipes;
  int margin_id = 0, point_id = 0;
  for (int p = 0; p < config.patients; ++p) {
    PatientRecord patient{p, {}};
    Rng patient_rng(derive_seed(config.seed, 2, p));
    const double pshift = config.variability.patient_fraction_sd * z(patient_rng);
    for (int k = 0; k < per_patient[static_cast<std::size_t>(p)]; ++k, ++margin_id) {
      const Label label = margin_labels[static_cast<std::size_t>(margin_id)];
      MarginRecord margin{margin_id, p, label, label, {}};
      Rng margin_rng(derive_seed(config.seed, 3, margin_id));
      const double mshift = config.variability.margin_fraction_sd * z(margin_rng);
      const int n_points = points_dist(rng);

      std::vector<PointRecipe> local;
      for (int j = 0; j < n_points; ++j) {
        PointRecipe r;
        r.model = config.classes[static_cast<std::size_t>(label)];
        r.draw = draw_point(derive_seed(config.seed, 1, point_id + j), pshift + mshift);
        r.snr_db = config.variability.snr_db + config.variability.snr_db_sd * r.draw.snr_z;
        local.push_back(std::move(r));
      }
      for (std::size_t ci = 0; ci < config.confounders.size(); ++ci) {
        const auto& cf = config.confounders[ci];
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Rng crng(derive_seed(config.seed, 4, margin_id, ci));
        if (u(crng) < cf.margin_probability)
          apply_confounder(local, cf.spec, config.classes, config.grey_matter_direction,
                           derive_seed(config.seed, 5, margin_id, ci));
      }
      for (auto& r : local) {
        PointRecord pt{point_id, p, margin_id, label, label, r.tags};
        margin.points.push_back(man.points.size());
        man.points.push_back(std::move(pt));
        recipes.push_back(std::move(r));
        ++point_id;
      }
      patient.margins.push_back(man.margins.size());
      man.margins.push_back(std::move(margin));
    }
    man.patients.push_back(std::move(patient));
  }

  out.waveforms.resize(recipes.size());
  parallel_for(recipes.size(), [&](std::size_t i) {
    for (int b = 0; b < kBandCount; ++b) {
      const auto band = static_cast<Band>(b);
      out.waveforms[i][static_cast<std::size_t>(b)] =
          recipes[i].render(band, config.waveform, config.variability,
                            derive_seed(config.seed, 6, man.points[i].point_id, b));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Label corruption

enum class NoiseMode { Adjacent, Uniform };

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "adjacent") return NoiseMode::Adjacent;
  if (s == "uniform") return NoiseMode::Uniform;
  throw ConfigError("unknown label-noise mode '" + s + "'");
}

/// Flips exactly round(rate * margins) margin labels and propagates them to
/// the points. Adjacent mode moves to class +-1 (clamped at the ends).
inline std::pair<DatasetManifest, CorruptionLog> inject_label_noise(DatasetManifest manifest,
                                                                    double rate, NoiseMode mode,
                                                                    std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("noise rate must lie in [0,1)");
  const int num_classes = manifest.num_classes();
  if (num_classes < 2) throw ParameterError("cannot corrupt labels with a single class");

  const auto flips = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(manifest.margins.size())));
  std::vector<std::size_t> order(manifest.margins.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorruptionLog log;
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> other(0, num_classes - 2);
  for (std::size_t k = 0; k < flips; ++k) {
    const std::size_t mi = order[k];
    const Label from = manifest.margins[mi].label;
    Label to = from;
    if (mode == NoiseMode::Adjacent) {
      if (from == 0)
        to = 1;
      else if (from == num_classes - 1)
        to = num_classes - 2;
      else
        to = from + (coin(rng) == 0 ? -1 : 1);
    } else {
      to = other(rng);
      if (to >= from) ++to;
    }
    manifest.set_margin_label(mi, to);
    log.entries.push_back({manifest.margins[mi].margin_id, from, to});
  }
  manifest.corruption.entries.insert(manifest.corruption.entries.end(), log.entries.begin(),
                                     log.entries.end());
  return {std::move(manifest), log};
}

/// Undoes a corruption log (entries applied in reverse order).
inline DatasetManifest revert_label_noise(DatasetManifest manifest, const CorruptionLog& log) {
  for (auto it = log.entries.rbegin(); it != log.entries.rend(); ++it) {
    manifest.set_margin_label(manifest.margin_index(it->margin_id), it->true_label);
    auto& entries = manifest.corruption.entries;
    for (auto e = entries.begin(); e != entries.end(); ++e)
      if (e->margin_id == it->margin_id && e->corrupted_label == it->corrupted_label) {
        entries.erase(e);
        break;
      }
  }
  return manifest;
}

}  // namespace flimcl::sim
