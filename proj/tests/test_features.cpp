#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "faultnet/features.hpp"
#include "faultnet/rng.hpp"
#include "support/oracles.hpp"

using namespace faultnet;
using faultnet_test::oracle_features;
using faultnet_test::OracleFeatures;
using faultnet_test::feature_err;
using faultnet_test::rel_err;

namespace {

Segment make_segment(std::vector<double> values, int label = 0) {
  Segment s;
  s.values = std::move(values);
  s.label = label;
  s.parent = "test";
  return s;
}

std::vector<double> random_segment(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal(0.2, 1.5);
  return x;
}

}  // namespace

TEST(Features, HandComputedFourPointExample) {
  const FeatureVector f = compute_features({1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(f.mean, 2.5, 1e-12);
  EXPECT_NEAR(f.variance, 1.25, 1e-12);
  EXPECT_NEAR(f.rms, std::sqrt(7.5), 1e-12);          // ~2.738613
  EXPECT_NEAR(f.peak_to_peak, 3.0, 1e-12);
  EXPECT_NEAR(f.crest_factor, 4.0 / std::sqrt(7.5), 1e-12);   // ~1.460593
  EXPECT_NEAR(f.shape_factor, std::sqrt(7.5) / 2.5, 1e-12);   // ~1.095445
  EXPECT_NEAR(f.impulse_factor, 1.6, 1e-12);
  const double sqrt_abs_mean = (1.0 + std::sqrt(2.0) + std::sqrt(3.0) + 2.0) / 4.0;
  EXPECT_NEAR(f.clearance_factor, 4.0 / (sqrt_abs_mean * sqrt_abs_mean), 1e-12);
  EXPECT_NEAR(f.clearance_factor, 1.694172, 1e-6);
  EXPECT_NEAR(f.abs_max, 4.0, 1e-12);
  EXPECT_NEAR(f.abs_mean, 2.5, 1e-12);
  EXPECT_NEAR(f.maximum, 4.0, 1e-12);
  EXPECT_NEAR(f.minimum, 1.0, 1e-12);
}

TEST(Features, ConstantSegmentIsDegenerate) {
  EXPECT_THROW(compute_features(std::vector<double>(100, 3.7)), DegenerateSignal);
}

TEST(Features, GaussianMomentCheck) {
  Rng rng(123);
  std::vector<double> x(100000);
  for (double& v : x) v = rng.normal(0.0, 1.0);
  const FeatureVector f = compute_features(x);
  EXPECT_GE(f.kurtosis, -0.1);
  EXPECT_LE(f.kurtosis, 0.1);
  EXPECT_GE(f.skewness, -0.05);
  EXPECT_LE(f.skewness, 0.05);
}

TEST(Features, AgreesWithBruteForceOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 16 + rng.uniform_index(2485);
    const std::vector<double> x = random_segment(rng, n);
    FeatureVector f;
    try {
      f = compute_features(x);
    } catch (const DegenerateSignal&) {
      continue;  // vanishingly unlikely with random data
    }
    const OracleFeatures o = oracle_features(x);
    EXPECT_LT(feature_err(f.mean, o.mean), 1e-9);
    EXPECT_LT(feature_err(f.abs_mean, o.abs_mean), 1e-9);
    EXPECT_LT(feature_err(f.maximum, o.maximum), 1e-9);
    EXPECT_LT(feature_err(f.minimum, o.minimum), 1e-9);
    EXPECT_LT(feature_err(f.peak_to_peak, o.peak_to_peak), 1e-9);
    EXPECT_LT(feature_err(f.abs_max, o.abs_max), 1e-9);
    EXPECT_LT(feature_err(f.rms, o.rms), 1e-9);
    EXPECT_LT(feature_err(f.variance, o.variance), 1e-9);
    EXPECT_LT(feature_err(f.clearance_factor, o.clearance_factor), 1e-9);
    EXPECT_LT(feature_err(f.kurtosis, o.kurtosis), 1e-9);
    EXPECT_LT(feature_err(f.skewness, o.skewness), 1e-9);
    EXPECT_LT(feature_err(f.impulse_factor, o.impulse_factor), 1e-9);
    EXPECT_LT(feature_err(f.crest_factor, o.crest_factor), 1e-9);
    EXPECT_LT(feature_err(f.shape_factor, o.shape_factor), 1e-9);
  }
}

TEST(Features, ShiftProperty) {
  Rng rng(77);
  const std::vector<double> x = random_segment(rng, 500);
  const FeatureVector base = compute_features(x);
  std::vector<double> shifted = x;
  const double c = 4.75;
  for (double& v : shifted) v += c;
  const FeatureVector f = compute_features(shifted);
  EXPECT_LT(rel_err(f.mean, base.mean + c), 1e-9);
  EXPECT_LT(rel_err(f.variance, base.variance), 1e-9);
  EXPECT_LT(rel_err(f.skewness, base.skewness), 1e-9);
  EXPECT_LT(rel_err(f.kurtosis, base.kurtosis), 1e-9);
}

TEST(Features, ScaleProperty) {
  Rng rng(78);
  const std::vector<double> x = random_segment(rng, 500);
  const FeatureVector base = compute_features(x);
  const double a = 3.5;
  std::vector<double> scaled = x;
  for (double& v : scaled) v *= a;
  const FeatureVector f = compute_features(scaled);
  EXPECT_LT(rel_err(f.mean, a * base.mean), 1e-9);
  EXPECT_LT(rel_err(f.rms, a * base.rms), 1e-9);
  EXPECT_LT(rel_err(f.peak_to_peak, a * base.peak_to_peak), 1e-9);
  EXPECT_LT(rel_err(f.variance, a * a * base.variance), 1e-9);
  EXPECT_LT(rel_err(f.crest_factor, base.crest_factor), 1e-9);
  EXPECT_LT(rel_err(f.shape_factor, base.shape_factor), 1e-9);
  EXPECT_LT(rel_err(f.impulse_factor, base.impulse_factor), 1e-9);
  EXPECT_LT(rel_err(f.clearance_factor, base.clearance_factor), 1e-9);
  EXPECT_LT(rel_err(f.skewness, base.skewness), 1e-9);
  EXPECT_LT(rel_err(f.kurtosis, base.kurtosis), 1e-9);
}

TEST(Features, InvariantIdentities) {
  Rng rng(79);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureVector f = compute_features(random_segment(rng, 64));
    EXPECT_DOUBLE_EQ(f.peak_to_peak, f.maximum - f.minimum);
    EXPECT_DOUBLE_EQ(f.abs_max, std::max(std::fabs(f.maximum), std::fabs(f.minimum)));
    EXPECT_LT(rel_err(f.rms * f.rms, f.variance + f.mean * f.mean), 1e-12);
  }
}

TEST(FeaturizeDataset, TimeVsWaveletDiffer) {
  Rng rng(80);
  Dataset ds;
  ds.scheme = Scheme::kSynthetic;
  ds.class_names = {{0, "class 0"}};
  ds.segments.push_back(make_segment(random_segment(rng, 256)));

  const auto time_fv = featurize_dataset(ds, FeatureDomain::kTime);
  const auto wl1_fv = featurize_dataset(ds, FeatureDomain::kWaveletL1);
  ASSERT_EQ(time_fv.size(), 1u);
  ASSERT_EQ(wl1_fv.size(), 1u);
  EXPECT_NE(time_fv[0].variance, wl1_fv[0].variance);
  EXPECT_EQ(wl1_fv[0].domain, FeatureDomain::kWaveletL1);
}

TEST(FeaturizeDataset, CardinalityAndOrder) {
  Rng rng(81);
  Dataset ds;
  ds.scheme = Scheme::kSynthetic;
  ds.class_names = {{0, "a"}, {1, "b"}};
  for (int i = 0; i < 20; ++i) {
    ds.segments.push_back(make_segment(random_segment(rng, 64), i % 2));
  }
  const auto fvs = featurize_dataset(ds, FeatureDomain::kTime);
  ASSERT_EQ(fvs.size(), 20u);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(fvs[static_cast<std::size_t>(i)].label, i % 2);
  }
}

TEST(FeaturizeDataset, EmptyDatasetThrows) {
  Dataset ds;
  EXPECT_THROW(featurize_dataset(ds, FeatureDomain::kTime), EmptyDataset);
}

TEST(FeaturizeDataset, DegenerateSegmentNamesProvenance) {
  Dataset ds;
  ds.scheme = Scheme::kSynthetic;
  ds.class_names = {{0, "a"}};
  Segment s = make_segment(std::vector<double>(32, 1.0));
  s.parent = "flatline[3]";
  ds.segments.push_back(s);
  try {
    featurize_dataset(ds, FeatureDomain::kTime);
    FAIL() << "expected DegenerateSignal";
  } catch (const DegenerateSignal& e) {
    EXPECT_NE(std::string(e.what()).find("flatline[3]"), std::string::npos);
  }
}
