#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "faultnet/errors.hpp"
#include "faultnet/ingest.hpp"
#include "faultnet/wavelet.hpp"

namespace faultnet {

// The 14 condition-monitoring statistics, computed with population (1/n)
// normalization throughout. Kurtosis is the excess form. Quantities named
// "absolute" and every factor denominator use |x_i|.

enum class FeatureDomain { kTime, kWaveletL1, kWaveletL2, kWaveletL3 };

inline std::string feature_domain_name(FeatureDomain d) {
  switch (d) {
    case FeatureDomain::kTime: return "time";
    case FeatureDomain::kWaveletL1: return "wavelet_l1";
    case FeatureDomain::kWaveletL2: return "wavelet_l2";
    case FeatureDomain::kWaveletL3: return "wavelet_l3";
  }
  return "?";
}

inline int feature_domain_level(FeatureDomain d) {
  switch (d) {
    case FeatureDomain::kTime: return 0;
    case FeatureDomain::kWaveletL1: return 1;
    case FeatureDomain::kWaveletL2: return 2;
    case FeatureDomain::kWaveletL3: return 3;
  }
  return 0;
}

struct FeatureVector {
  double mean = 0.0;
  double abs_mean = 0.0;
  double maximum = 0.0;
  double minimum = 0.0;
  double peak_to_peak = 0.0;
  double abs_max = 0.0;
  double rms = 0.0;
  double variance = 0.0;
  double clearance_factor = 0.0;
  double kurtosis = 0.0;
  double skewness = 0.0;
  double impulse_factor = 0.0;
  double crest_factor = 0.0;
  double shape_factor = 0.0;
  FeatureDomain domain = FeatureDomain::kTime;
  int label = 0;

  static constexpr std::size_t kCount = 14;

  static const std::array<std::string, kCount>& names() {
    static const std::array<std::string, kCount> n = {
        "mean",           "abs_mean",        "maximum",
        "minimum",        "peak_to_peak",    "abs_max",
        "rms",            "variance",        "clearance_factor",
        "kurtosis",       "skewness",        "impulse_factor",
        "crest_factor",   "shape_factor"};
    return n;
  }

  std::array<double, kCount> as_array() const {
    return {mean,     abs_mean,         maximum,  minimum,  peak_to_peak,
            abs_max,  rms,              variance, clearance_factor,
            kurtosis, skewness,         impulse_factor,
            crest_factor, shape_factor};
  }
};

inline FeatureVector compute_features(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) throw TooShort("compute_features: need at least 2 samples");

  double sum = 0.0, abs_sum = 0.0, sq_sum = 0.0, sqrt_abs_sum = 0.0;
  double maximum = x[0], minimum = x[0];
  for (double v : x) {
    if (!std::isfinite(v)) throw NonFinite("compute_features: non-finite sample");
    sum += v;
    const double a = std::fabs(v);
    abs_sum += a;
    sq_sum += v * v;
    sqrt_abs_sum += std::sqrt(a);
    maximum = std::max(maximum, v);
    minimum = std::min(minimum, v);
  }
  const double dn = static_cast<double>(n);
  const double mean = sum / dn;
  const double abs_mean = abs_sum / dn;
  const double rms = std::sqrt(sq_sum / dn);
  const double abs_max = std::max(std::fabs(maximum), std::fabs(minimum));

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  const double variance = m2;

  // Constant segments make the standardized moments (and factor denominators
  // that follow from them) meaningless; reject instead of emitting NaN.
  if (variance < 1e-24) {
    throw DegenerateSignal("compute_features: variance " +
                           std::to_string(variance) +
                           " below 1e-24 (constant segment)");
  }

  FeatureVector f;
  f.mean = mean;
  f.abs_mean = abs_mean;
  f.maximum = maximum;
  f.minimum = minimum;
  f.peak_to_peak = maximum - minimum;
  f.abs_max = abs_max;
  f.rms = rms;
  f.variance = variance;
  const double sqrt_abs_mean = sqrt_abs_sum / dn;
  f.clearance_factor = abs_max / (sqrt_abs_mean * sqrt_abs_mean);
  f.kurtosis = m4 / (variance * variance) - 3.0;
  f.skewness = m3 / std::pow(variance, 1.5);
  f.impulse_factor = abs_max / abs_mean;
  f.crest_factor = abs_max / rms;
  f.shape_factor = rms / abs_mean;
  return f;
}

inline FeatureVector time_domain_features(const Segment& segment) {
  FeatureVector f = compute_features(segment.values);
  f.domain = FeatureDomain::kTime;
  f.label = segment.label;
  return f;
}

// One FeatureVector per segment, on the raw samples or on the Haar
// approximation coefficients at the tagged level.
inline std::vector<FeatureVector> featurize_segments(
    const std::vector<Segment>& segments, FeatureDomain domain) {
  const int level = feature_domain_level(domain);
  std::vector<FeatureVector> out;
  out.reserve(segments.size());
  for (const Segment& seg : segments) {
    try {
      FeatureVector f = (level == 0)
                            ? compute_features(seg.values)
                            : compute_features(wavelet_approx(seg.values, level));
      f.domain = domain;
      f.label = seg.label;
      out.push_back(f);
    } catch (const DegenerateSignal& e) {
      throw DegenerateSignal(std::string(e.what()) + " (segment " + seg.parent + ")");
    }
  }
  return out;
}

inline std::vector<FeatureVector> featurize_dataset(const Dataset& dataset,
                                                    FeatureDomain domain) {
  if (dataset.segments.empty()) {
    throw EmptyDataset("featurize_dataset: dataset has no segments");
  }
  return featurize_segments(dataset.segments, domain);
}

// CSV export with a fixed column order: the 14 feature names, then label,
// then domain.
inline void write_feature_csv(const std::string& path,
                              const std::vector<FeatureVector>& features) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature CSV: " + path);
  const auto& names = FeatureVector::names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i] << ',';
  }
  out << "label,domain\n";
  char buf[64];
  for (const FeatureVector& f : features) {
    for (double v : f.as_array()) {
      std::snprintf(buf, sizeof(buf), "%.17g,", v);
      out << buf;
    }
    out << f.label << ',' << feature_domain_name(f.domain) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace faultnet
