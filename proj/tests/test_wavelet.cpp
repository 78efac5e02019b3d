#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "faultnet/rng.hpp"
#include "faultnet/wavelet.hpp"
#include "support/oracles.hpp"

using namespace faultnet;
using faultnet_test::rel_err;

TEST(Haar, ConstantSignalHasZeroDetail) {
  const double c = 3.25;
  const WaveletCoeffs wc = haar_dwt_step({c, c, c, c});
  ASSERT_EQ(wc.approx.size(), 2u);
  const double expected = c * std::sqrt(2.0);
  EXPECT_NEAR(wc.approx[0], expected, 1e-12);
  EXPECT_NEAR(wc.approx[1], expected, 1e-12);
  EXPECT_NEAR(wc.detail[0], 0.0, 1e-12);
  EXPECT_NEAR(wc.detail[1], 0.0, 1e-12);
}

TEST(Haar, HandEvaluatedStep) {
  const WaveletCoeffs wc = haar_dwt_step({1.0, 2.0, 3.0, 4.0});
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(wc.approx[0], 3.0 * inv_sqrt2, 1e-12);  // ~2.121320
  EXPECT_NEAR(wc.approx[1], 7.0 * inv_sqrt2, 1e-12);  // ~4.949747
  EXPECT_NEAR(wc.detail[0], -inv_sqrt2, 1e-12);
  EXPECT_NEAR(wc.detail[1], -inv_sqrt2, 1e-12);
}

TEST(Haar, OddTrailingSampleDropped) {
  const WaveletCoeffs wc = haar_dwt_step({1.0, 2.0, 3.0, 4.0, 99.0});
  EXPECT_EQ(wc.approx.size(), 2u);
  EXPECT_EQ(wc.detail.size(), 2u);
}

TEST(Haar, TooShortThrows) {
  EXPECT_THROW(haar_dwt_step({1.0}), TooShort);
}

TEST(Haar, InverseReconstructs) {
  Rng rng(5);
  std::vector<double> x(64);
  for (double& v : x) v = rng.normal(0.0, 2.0);
  const WaveletCoeffs wc = haar_dwt_step(x);
  const std::vector<double> back = inverse_haar(wc.approx, wc.detail);
  ASSERT_EQ(back.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(back[i], x[i], 1e-12);
  }
}

TEST(Haar, EnergyConservationPerStep) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 * (1 + rng.uniform_index(500));
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal(0.0, 3.0);
    const WaveletCoeffs wc = haar_dwt_step(x);
    double in = 0.0, out = 0.0;
    for (double v : x) in += v * v;
    for (double v : wc.approx) out += v * v;
    for (double v : wc.detail) out += v * v;
    EXPECT_LT(rel_err(out, in), 1e-9);
  }
}

TEST(WaveletApprox, ConstantScalesByPow2Half) {
  const double c = -1.75;
  const std::vector<double> a = wavelet_approx(std::vector<double>(8, c), 3);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_NEAR(a[0], c * std::pow(2.0, 1.5), 1e-12);  // 2*sqrt(2)*c
}

TEST(WaveletApprox, HandLevel2) {
  const std::vector<double> a = wavelet_approx({1.0, 2.0, 3.0, 4.0}, 2);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_NEAR(a[0], 5.0, 1e-12);  // (3/sqrt2 + 7/sqrt2)/sqrt2
}

TEST(WaveletApprox, TooShortForLevel) {
  EXPECT_THROW(wavelet_approx({1, 2, 3, 4, 5}, 3), TooShort);
}

TEST(WaveletApprox, LengthHalvesPerLevel) {
  std::vector<double> x(2500, 0.0);
  Rng rng(7);
  for (double& v : x) v = rng.uniform();
  EXPECT_EQ(wavelet_approx(x, 1).size(), 1250u);
  EXPECT_EQ(wavelet_approx(x, 2).size(), 625u);
  EXPECT_EQ(wavelet_approx(x, 3).size(), 312u);  // odd 625 drops one sample
}
