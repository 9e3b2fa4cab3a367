#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sigscat/fft.hpp"
#include "sigscat/random.hpp"
#include "sigscat/scattering.hpp"

using namespace sigscat;

namespace {

using fixture::noise_image;

double sq_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

ScatteringConfig small_config(int J = 2, int L = 4) { return {J, L, 48, 64}; }

}  // namespace

TEST(Layout, ChannelCountClosedForm) {
  for (int J = 1; J <= 4; ++J) {
    for (int L = 1; L <= 8; ++L) {
      EXPECT_EQ(scattering_channels(J, L), static_cast<std::size_t>(1 + J * L + L * L * J * (J - 1) / 2));
      EXPECT_EQ(scattering_paths(J, L).size(), scattering_channels(J, L));
    }
  }
  const auto lay = output_layout(ScatteringConfig{});
  EXPECT_EQ(lay.channels, 81u);
  EXPECT_EQ(lay.height, 45u);
  EXPECT_EQ(lay.width, 75u);
  EXPECT_EQ(scattering_channels(1, 8), 9u);
  const auto big = output_layout(ScatteringConfig{3, 6, 240, 320});
  EXPECT_EQ(big.channels, 127u);
  EXPECT_EQ(big.height, 30u);
  EXPECT_EQ(big.width, 40u);
}

TEST(FilterBank, OneBandPassPerScaleAndOrientation) {
  EXPECT_EQ(FilterBank(ScatteringConfig{}).psi().size(), 16u);
  EXPECT_EQ(FilterBank(ScatteringConfig{1, 4, 48, 64}).psi().size(), 4u);
}

TEST(Layout, ValidateRejectsIndivisibleExtents) {
  EXPECT_THROW((ScatteringConfig{3, 8, 180, 300}.validate()), ConfigError);
  EXPECT_THROW((ScatteringConfig{0, 8, 180, 300}.validate()), ConfigError);
  EXPECT_THROW((ScatteringConfig{2, 0, 180, 300}.validate()), ConfigError);
  EXPECT_NO_THROW((ScatteringConfig{3, 8, 184, 304}.validate()));
}

TEST(Layout, PathOrderIsZeroThenFirstThenSecond) {
  const auto paths = scattering_paths(3, 2);
  EXPECT_EQ(paths[0].order, 0);
  EXPECT_EQ(paths[1].order, 1);
  EXPECT_EQ(paths[1].j1, 0);
  EXPECT_EQ(paths[2].theta1, 1);
  EXPECT_EQ(paths[7].order, 2);
  for (std::size_t i = 7; i < paths.size(); ++i) EXPECT_GT(paths[i].j2, paths[i].j1);
}

TEST(FilterBank, BandPassFiltersVanishAtZeroFrequency) {
  const FilterBank bank(small_config());
  for (const auto& f : bank.psi()) EXPECT_NEAR(f.response[0], 0.0, 1e-12);
  EXPECT_NEAR(bank.phi().response[0], 1.0, 1e-12);
}

TEST(FilterBank, LittlewoodPaleyBounds) {
  // Four orientations leave angular gaps, so the lower bound is checked from six up.
  for (auto cfg : {ScatteringConfig{}, small_config(2, 8), ScatteringConfig{3, 6, 184, 304}}) {
    const FilterBank bank(cfg);
    const auto lp = littlewood_paley(bank);
    double lo = 1e9, hi = 0;
    const std::size_t R = bank.rows(), C = bank.cols();
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const double wy = FilterBank::angular_frequency(r, R), wx = FilterBank::angular_frequency(c, C);
        hi = std::max(hi, lp[r * C + c]);
        if (std::hypot(wy, wx) <= 0.75 * std::numbers::pi) lo = std::min(lo, lp[r * C + c]);
      }
    }
    EXPECT_LE(hi, 1.0 + 1e-12);
    EXPECT_GE(lo, 0.5);
  }
}

TEST(Fft, MatchesIndependentDftAndRoundTrips) {
  Rng rng(1);
  const std::size_t R = 12, C = 20;
  std::vector<Complex> x(R * C), X(R * C), back(R * C);
  std::vector<oracle::cplx> xo(R * C);
  for (std::size_t i = 0; i < x.size(); ++i) xo[i] = x[i] = {rng.normal(), rng.normal()};
  Fft2d fft(R, C);
  fft.forward(x, X);
  const auto ref = oracle::dft2(xo, R, C);
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_LT(std::abs(X[i] - ref[i]), 1e-10);
  fft.inverse(X, back);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(back[i] - x[i]), 1e-12);
}

TEST(Scatter, MatchesPerPathOracle) {
  Rng rng(2);
  const FilterBank bank(small_config());
  const auto img = noise_image(48, 64, rng);
  const auto out = scatter(img, bank);
  const std::size_t hw = 12 * 16;
  double num = 0, den = 0;
  for (std::size_t c = 0; c < out.path_index.size(); ++c) {
    const auto ref = oracle::scatter_path(img, bank, out.path_index[c]);
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = out.coefficients[c * hw + i] - ref[i];
      num += d * d;
      den += ref[i] * ref[i];
    }
  }
  EXPECT_LT(std::sqrt(num / den), 1e-10);
}

TEST(Scatter, ConstantImage) {
  const FilterBank bank(small_config());
  const auto out = scatter(Tensor<double>(Shape{48, 64}, 0.7), bank);
  const std::size_t hw = 12 * 16;
  for (std::size_t i = 0; i < hw; ++i) EXPECT_NEAR(out.coefficients[i], 0.7, 1e-12);
  for (std::size_t i = hw; i < out.coefficients.size(); ++i) EXPECT_NEAR(out.coefficients[i], 0.0, 1e-10);
}

TEST(Scatter, OrderSelectsChannelCount) {
  const FilterBank bank(small_config());
  const Tensor<double> img(Shape{48, 64}, 0.5);
  EXPECT_EQ(scatter(img, bank, 0).coefficients.dim(0), 1u);
  EXPECT_EQ(scatter(img, bank, 1).coefficients.dim(0), 9u);
  EXPECT_EQ(scatter(img, bank, 2).coefficients.dim(0), 25u);
  EXPECT_THROW(scatter(img, bank, 3), Error);
  EXPECT_THROW(scatter(Tensor<double>(Shape{40, 64}), bank), ShapeError);
}

TEST(Scatter, NonExpansiveAndEnergyBounded) {
  Rng rng(3);
  const FilterBank bank(small_config());
  const double cell = 16.0;   // pixels represented by one output sample
  for (int k = 0; k < 5; ++k) {
    const auto a = noise_image(48, 64, rng), b = noise_image(48, 64, rng);
    const auto sa = scatter(a, bank).coefficients, sb = scatter(b, bank).coefficients;
    std::vector<double> ds(sa.size()), dx(a.size());
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = sa[i] - sb[i];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = a[i] - b[i];
    EXPECT_LE(cell * sq_norm(ds), sq_norm(dx));
    EXPECT_LE(cell * sq_norm(sa.data()), sq_norm(a.data()));
  }
}

TEST(Scatter, StableUnderSmallCyclicShifts) {
  const FilterBank bank(ScatteringConfig{});
  Rng rng(4);
  const auto x = fixture::smooth_field(180, 300, 16.0, rng);
  const auto sx = scatter(x, bank).coefficients;
  for (std::size_t dx : {1u, 2u}) {
    const auto st = scatter(fixture::shift_columns(x, dx), bank).coefficients;
    std::vector<double> d(sx.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = st[i] - sx[i];
    EXPECT_LE(std::sqrt(sq_norm(d) / sq_norm(sx.data())), 0.1) << "shift " << dx;
  }
}

TEST(Scatter, ZeroImageAndNonNegativity) {
  const FilterBank bank(small_config());
  const auto zero = scatter(Tensor<double>(Shape{48, 64}), bank).coefficients;
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  Rng rng(5);
  const auto out = scatter(noise_image(48, 64, rng), bank).coefficients;
  for (std::size_t i = 12 * 16; i < out.size(); ++i) EXPECT_GE(out[i], -1e-9);
}
