#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mrsq/preprocess/denoise.hpp"
#include "mrsq/synthetic.hpp"
#include "oracles.hpp"

using namespace mrsq;
using namespace mrsq::preprocess;

namespace {

struct TrueMode {
  double f, d;
  Complex a;
};

ComplexVec modes_fid(const std::vector<TrueMode>& modes, std::size_t n, double dt) {
  ComplexVec x(n);
  for (const auto& m : modes)
    for (std::size_t k = 0; k < n; ++k)
      x[k] += m.a * std::exp(Complex(-m.d, 2 * std::numbers::pi * m.f) * (double(k) * dt));
  return x;
}

AcquisitionParams acq_n(std::size_t n) {
  AcquisitionParams a;
  a.num_points = n;
  return a;
}

double norm2(const ComplexVec& v) {
  double s = 0;
  for (auto z : v) s += std::norm(z);
  return std::sqrt(s);
}

}  // namespace

TEST(Hsvd, SingleExponential) {
  const double dt = 1.0 / 2000.0;
  const auto x = modes_fid({{100.0, 5.0, {1.0, 0.0}}}, 256, dt);
  HsvdConfig cfg;
  cfg.rank = 1;
  const auto modes = hsvd_components(x, dt, cfg);
  ASSERT_EQ(modes.size(), 1u);
  EXPECT_NEAR(modes[0].frequency, 100.0, 1e-6 * 100);
  EXPECT_NEAR(modes[0].damping, 5.0, 1e-6 * 5);
  EXPECT_NEAR(std::abs(modes[0].amplitude - Complex(1.0, 0.0)), 0.0, 1e-6);
}

TEST(Hsvd, TwoSeparatedModesLargeSignal) {
  const double dt = 1.0 / 2000.0;
  const std::vector<TrueMode> truth{{-300.0, 8.0, {2.0, 1.0}}, {250.0, 20.0, {0.5, -0.5}}};
  const auto x = modes_fid(truth, 2048, dt);
  HsvdConfig cfg;
  cfg.rank = 2;
  const auto modes = hsvd_components(x, dt, cfg);
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0].frequency, -300.0, 300e-6);
  EXPECT_NEAR(modes[0].damping, 8.0, 8e-6);
  EXPECT_NEAR(modes[1].frequency, 250.0, 250e-6);
  EXPECT_NEAR(modes[1].damping, 20.0, 20e-6);
  EXPECT_LT(std::abs(modes[1].amplitude - truth[1].a) / std::abs(truth[1].a), 1e-6);
}

TEST(Hsvd, ZeroInputIsDegenerate) {
  EXPECT_THROW(hsvd_components(ComplexVec(64), 1e-3, {4, 0}), DegenerateError);
  EXPECT_THROW(hsvd_components(ComplexVec(3, 1.0), 1e-3, {1, 0}), ArgumentError);
}

TEST(Denoise, ConfigValidation) {
  Spectrum s{oracle::random_complex(64, 1), acq_n(64), {}};
  DenoiseConfig cfg;
  cfg.rank = 32;
  cfg.hankel_rows = 32;
  EXPECT_THROW(denoise(s, cfg), ConfigError);
  cfg.engine = "relstm";
  EXPECT_THROW(denoise(s, cfg), ConfigError);
}

TEST(Denoise, PassthroughAndZero) {
  Spectrum s{oracle::random_complex(64, 2), acq_n(64), {}};
  s.meta.opaque_id = "abc";
  DenoiseConfig pass;
  pass.engine = "passthrough";
  EXPECT_EQ(denoise(s, pass).fid, s.fid);
  Spectrum z{ComplexVec(64), acq_n(64), {}};
  DenoiseConfig cfg;
  cfg.rank = 4;
  EXPECT_EQ(denoise(z, cfg).fid, z.fid);
}

TEST(Denoise, ExactLowRankRecoveryAndIdempotence) {
  const auto a = acq_n(2048);
  const auto x = modes_fid({{-200, 10, {1, 0}}, {50, 6, {0.3, 0.2}}, {320, 15, {0.7, -0.1}}},
                           a.num_points, a.dwell_time());
  Spectrum s{x, a, {}};
  s.meta.opaque_id = "keep";
  s.meta.age = 51;
  DenoiseConfig cfg;
  cfg.rank = 3;
  const auto out = denoise(s, cfg);
  EXPECT_LT(oracle::rel_err(out.fid, x), 1e-8);
  EXPECT_EQ(out.meta.opaque_id, "keep");
  EXPECT_EQ(out.meta.age, 51.0);
  EXPECT_EQ(out.acq.num_points, a.num_points);
  EXPECT_EQ(out.acq.spectral_width, a.spectral_width);
  const auto twice = denoise(out, cfg);
  EXPECT_LT(oracle::rel_err(twice.fid, out.fid), 1e-6);
}

TEST(Denoise, EnergyDoesNotIncrease) {
  const auto a = acq_n(512);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = modes_fid({{-100, 10, {1, 0}}, {120, 6, {0.4, 0.2}}}, a.num_points, a.dwell_time());
    synthetic::add_noise(x, 0.05 * (trial + 1), rng);
    Spectrum s{x, a, {}};
    DenoiseConfig cfg;
    cfg.rank = 8;
    const auto out = denoise(s, cfg);
    EXPECT_LE(norm2(out.fid), norm2(x) * (1 + 1e-9));
  }
}

TEST(Denoise, ImprovesSnrOnSyntheticSpectra) {
  AcquisitionParams a;
  synthetic::Scenario sc{synthetic::make_basis({"NAA", "Cr", "GPC", "Ins", "Glu"}, a),
                         {10, 8, 3, 6, 9},
                         ImperfectionFactors::none(5),
                         {},
                         a};
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto s = synthetic::render(sc, 11.0, rng);  // display SNR 22
    const auto in = snr_estimate(s);
    const auto out = snr_estimate(denoise(s));
    EXPECT_GE(out.raw, in.raw);
    ratios.push_back(double(out.display) / double(in.display));
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_GE(ratios[ratios.size() / 2], 1.3);
  EXPECT_GE(ratios.front(), 1.3);
}

TEST(Denoise, CustomEngineRegistration) {
  register_denoise_engine("halve", [](const Spectrum& s, const DenoiseConfig&) {
    Spectrum o = s;
    for (auto& z : o.fid) z *= 0.5;
    return o;
  });
  Spectrum s{ComplexVec(8, 2.0), acq_n(8), {}};
  DenoiseConfig cfg;
  cfg.engine = "halve";
  EXPECT_EQ(denoise(s, cfg).fid[3], Complex(1.0, 0.0));
}
