#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flimcl/features/deconvolution.hpp"
#include "flimcl/features/extract.hpp"
#include "flimcl/features/laguerre.hpp"
#include "flimcl/features/lifetime.hpp"
#include "flimcl/features/phasor.hpp"

using namespace flimcl;
using namespace flimcl::features;

namespace {

constexpr double kDt = 0.4;
constexpr std::size_t kN = 200;  // 80 ns record

std::vector<double> exp_decay(double tau, std::size_t n = kN, double amp = 1.0) {
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = amp * std::exp(-static_cast<double>(i) * kDt / tau);
  return h;
}

// Independent forward model for the deconvolution oracle.
Waveform forward(const std::vector<double>& h, const Irf& irf, double snr_db,
                 std::uint64_t seed) {
  std::vector<double> y(kN, 0.0);
  for (std::size_t i = 0; i < kN; ++i)
    for (std::size_t k = 0; k <= i; ++k) y[i] += irf.samples[k] * h[i - k];
  if (std::isfinite(snr_db)) {
    double power = 0;
    for (double v : y) power += v * v;
    const double sd = std::sqrt(power / kN) / std::pow(10.0, snr_db / 20.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sd);
    for (auto& v : y) v += noise(rng);
  }
  return Waveform{y, kDt, Band::A};
}

}  // namespace

TEST(Laguerre, SingleColumnHasUnitNorm) {
  for (double alpha : {0.2, 0.55, 0.9}) {
    auto b = laguerre_basis(1, alpha, 128);
    EXPECT_NEAR(b.values.col(0).norm(), 1.0, 1e-12);
  }
}

TEST(Laguerre, GramMatrixIsIdentity) {
  auto b = laguerre_basis(12, 0.88, 1024);
  EXPECT_LE(orthonormality_error(b), 1e-8);
}

TEST(Laguerre, OrthonormalAcrossOrdersAndLengths) {
  for (int order : {1, 6, 12, 24})
    for (std::size_t n : {256u, 300u, 1024u})
      for (double alpha : {0.3, 0.55, 0.88, 0.95})
        EXPECT_LE(orthonormality_error(laguerre_basis(order, alpha, n)), 1e-8)
            << order << " " << n << " " << alpha;
}

TEST(Laguerre, SquareBasisIsOrthogonalMatrix) {
  auto b = laguerre_basis(16, 0.6, 16);
  EXPECT_NEAR(std::abs(b.values.determinant()), 1.0, 1e-6);
}

TEST(Laguerre, RejectsBadParameters) {
  EXPECT_THROW(laguerre_basis(12, 1.0, 200), ParameterError);
  EXPECT_THROW(laguerre_basis(12, 0.0, 200), ParameterError);
  EXPECT_THROW(laguerre_basis(0, 0.5, 200), ParameterError);
  EXPECT_THROW(laguerre_basis(201, 0.5, 200), ParameterError);
}

TEST(Laguerre, LeadingColumnsFollowRawSequences) {
  // On a long record the truncated sequences are already orthonormal, so the
  // re-orthonormalized basis must coincide with them.
  auto b = laguerre_basis(4, 0.5, 512);
  Matrix raw = laguerre_sequences(4, 0.5, 512);
  EXPECT_LE((b.values - raw).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Nnls, MatchesKnownSolution) {
  Matrix a(3, 2);
  a << 1, 0, 0, 1, 1, 1;
  Vector b(3);
  b << 2, -1, 1;
  auto r = nnls(a, b);
  // Unconstrained optimum has x2 < 0; constrained optimum is x = (1.5, 0).
  EXPECT_NEAR(r.x(0), 1.5, 1e-12);
  EXPECT_NEAR(r.x(1), 0.0, 1e-12);
}

TEST(Deconvolution, RecoversMonoExponentialWithImpulseIrf) {
  const auto irf = delta_irf(kDt, kN);
  const auto truth = exp_decay(4.0);
  const auto fit = deconvolve(Waveform{truth, kDt, Band::A}, irf, laguerre_basis(12, 0.55, kN));
  double num = 0, den = 0;
  for (std::size_t i = 0; i < kN; ++i) {
    num += (fit.decay[i] - truth[i]) * (fit.decay[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  EXPECT_LE(std::sqrt(num / den), 0.01);
}

TEST(Deconvolution, ImpulseResponseConcentratesAtOrigin) {
  // A 12-term basis only resolves an impulse when its time scale is short;
  // at the default alpha the leading mass is ~0.75-0.85.
  const auto basis = laguerre_basis(12, 0.2, kN);
  for (const auto& irf : {delta_irf(kDt, kN), gaussian_irf(1.0, kDt, kN, 3.0)}) {
    const auto fit = deconvolve(Waveform{irf.samples, kDt, Band::A}, irf, basis);
    double head = fit.decay[0] + fit.decay[1], total = 0;
    for (double v : fit.decay) total += v;
    EXPECT_GE(head / total, 0.95);
  }
}

TEST(Deconvolution, NoisyLifetimeWithinFivePercent) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  const Deconvolver dec(irf, laguerre_basis(12, 0.55, kN));
  const auto fit = dec.fit(forward(exp_decay(4.0), irf, 40.0, 11));
  EXPECT_NEAR(mean_lifetime(fit.decay, kDt), 4.0, 0.05 * 4.0);
}

TEST(Deconvolution, ReconstructedDecayIsNonnegative) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  const Deconvolver dec(irf, laguerre_basis(12, 0.55, kN));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto fit = dec.fit(forward(exp_decay(2.0), irf, 20.0, seed));
    for (double v : fit.decay) EXPECT_GE(v, 0.0);
    EXPECT_GE(fit.residual_norm, 0.0);
  }
}

TEST(Deconvolution, ZeroWaveformIsDegenerate) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  EXPECT_THROW(deconvolve(Waveform{std::vector<double>(kN, 0.0), kDt, Band::A}, irf,
                          laguerre_basis(12, 0.55, kN)),
               DegenerateInputError);
}

TEST(Deconvolution, MismatchedSamplePeriodRejected) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  EXPECT_THROW(deconvolve(Waveform{exp_decay(2.0), 0.5, Band::A}, irf,
                          laguerre_basis(12, 0.55, kN)),
               InputError);
}

TEST(Deconvolution, ResidualNonIncreasingInOrder) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  std::vector<double> h(kN);
  for (std::size_t i = 0; i < kN; ++i)
    h[i] = 0.3 * std::exp(-double(i) * kDt / 0.9) + 0.7 * std::exp(-double(i) * kDt / 5.0);
  const auto wf = forward(h, irf, 35.0, 3);
  double prev = std::numeric_limits<double>::infinity();
  for (int order = 1; order <= 16; ++order) {
    const auto fit = deconvolve(wf, irf, laguerre_basis(order, 0.55, kN));
    EXPECT_LE(fit.residual_norm, prev * (1 + 1e-6)) << "order " << order;
    prev = fit.residual_norm;
  }
}

TEST(Deconvolution, AmplitudeScalingIsLinear) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  const Deconvolver dec(irf, laguerre_basis(12, 0.55, kN));
  auto wf = forward(exp_decay(3.0), irf, 30.0, 5);
  const auto a = dec.fit(wf);
  for (auto& v : wf.samples) v *= 7.5;
  const auto b = dec.fit(wf);
  for (std::size_t j = 0; j < a.coefficients.size(); ++j)
    EXPECT_NEAR(b.coefficients[j], 7.5 * a.coefficients[j], 1e-9 * 7.5);
  EXPECT_NEAR(mean_lifetime(a.decay, kDt), mean_lifetime(b.decay, kDt), 1e-9);
  const auto pa = phasor_harmonics(a.decay, kDt), pb = phasor_harmonics(b.decay, kDt);
  for (std::size_t n = 1; n <= 3; ++n) {
    EXPECT_NEAR(pa[n].g, pb[n].g, 1e-9);
    EXPECT_NEAR(pa[n].s, pb[n].s, 1e-9);
  }
}

TEST(Lifetime, ExponentialRecord) {
  EXPECT_NEAR(mean_lifetime(exp_decay(4.0), kDt), 4.0, 0.01 * 4.0);
}

TEST(Lifetime, ImpulseIsZero) {
  std::vector<double> h(kN, 0.0);
  h[0] = 1.0;
  EXPECT_DOUBLE_EQ(mean_lifetime(h, kDt), 0.0);
}

TEST(Lifetime, UniformIsHalfRecord) {
  std::vector<double> odd(201, 1.0), even(200, 1.0);
  EXPECT_NEAR(mean_lifetime(odd, kDt), 200 * kDt / 2, 1e-9);
  EXPECT_NEAR(mean_lifetime(even, kDt), 199 * kDt / 2, 1e-9);
}

TEST(Lifetime, ZeroDecayIsDegenerate) {
  EXPECT_THROW(mean_lifetime(std::vector<double>(kN, 0.0), kDt), DegenerateInputError);
}

TEST(Lifetime, AmplitudeWeightedTwoComponent) {
  std::vector<double> h(kN);
  for (std::size_t i = 0; i < kN; ++i)
    h[i] = 0.5 * std::exp(-double(i) * kDt / 1.0) + 0.5 * std::exp(-double(i) * kDt / 6.0);
  EXPECT_NEAR(amplitude_weighted_lifetime(h, kDt), 3.5, 0.02 * 3.5);
}

TEST(Phasor, MonoExponentialAtUnitOmegaTau) {
  const double tau = 1.0 / harmonic_omega(kN, kDt);
  const auto ph = phasor_harmonics(exp_decay(tau), kDt);
  EXPECT_NEAR(ph[1].g, 0.5, 1e-3);
  EXPECT_NEAR(ph[1].s, 0.5, 1e-3);
}

TEST(Phasor, MonoExponentialHigherHarmonics) {
  const double tau = 2.5;
  const auto ph = phasor_harmonics(exp_decay(tau), kDt);
  for (int n = 1; n <= 3; ++n) {
    const double wt = harmonic_omega(kN, kDt, n) * tau;
    // sampling error grows with (n * omega * dt)^2
    EXPECT_NEAR(ph[n].g, 1.0 / (1.0 + wt * wt), 3e-3);
    EXPECT_NEAR(ph[n].s, wt / (1.0 + wt * wt), 3e-3);
  }
}

TEST(Phasor, ImpulseSitsAtOne) {
  std::vector<double> h(kN, 0.0);
  h[0] = 2.0;
  const auto ph = phasor_harmonics(h, kDt);
  for (std::size_t n = 1; n <= 3; ++n) {
    EXPECT_NEAR(ph[n].g, 1.0, 1e-12);
    EXPECT_NEAR(ph[n].s, 0.0, 1e-12);
  }
}

TEST(Phasor, ZeroDcIsDegenerate) {
  EXPECT_THROW(phasor_harmonics(std::vector<double>(kN, 0.0), kDt), DegenerateInputError);
}

TEST(Phasor, TwoExponentialMixturesInsideSemicircle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> tau(0.2, 30.0), frac(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double t1 = tau(rng), t2 = tau(rng), f = frac(rng);
    std::vector<double> h(kN);
    for (std::size_t i = 0; i < kN; ++i)
      h[i] = f * std::exp(-double(i) * kDt / t1) + (1 - f) * std::exp(-double(i) * kDt / t2);
    EXPECT_LT(phasor_harmonics(h, kDt).semicircle_excess(1), 1e-6);
  }
}

TEST(Features, SchemaHas38Dimensions) {
  FeatureSchema schema;
  EXPECT_EQ(schema.dimension(), 38u);
  const auto names = schema.names();
  ASSERT_EQ(names.size(), 38u);
  EXPECT_EQ(names.front(), "bandA_LT");
  EXPECT_EQ(names[1], "bandA_LC01");
  EXPECT_EQ(names[18], "bandA_Ph3s");
  EXPECT_EQ(names[19], "bandB_LT");
  schema.intensity_ratio = true;
  EXPECT_EQ(schema.dimension(), 40u);
  EXPECT_EQ(schema.names().back(), "bandB_IR");
}

TEST(Features, ExtractsLifetimeAndSymmetricBlocks) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  FeatureExtractor fx(FeatureSchema{}, irf, kN);
  auto a = forward(exp_decay(4.0), irf, INFINITY, 0);
  auto b = a;
  b.band = Band::B;
  const std::vector<Waveform> point{a, b};
  const auto x = fx.extract(point);
  ASSERT_EQ(x.size(), 38u);
  EXPECT_NEAR(x[0], 4.0, 0.05 * 4.0);
  for (std::size_t i = 0; i < 19; ++i) EXPECT_DOUBLE_EQ(x[i], x[19 + i]);
}

TEST(Features, MissingBandIsInputError) {
  const auto irf = gaussian_irf(1.0, kDt, kN, 3.0);
  FeatureExtractor fx(FeatureSchema{}, irf, kN);
  const std::vector<Waveform> point{forward(exp_decay(4.0), irf, INFINITY, 0)};
  EXPECT_THROW(fx.extract(point), InputError);
}
