#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "faultnet/errors.hpp"

namespace faultnet {

// Orthonormal Haar decomposition. One step halves the signal into low-pass
// (approximation) and high-pass (detail) branches with the 1/sqrt(2)
// convention, so energy is conserved per step. An odd trailing sample is
// dropped.

struct WaveletCoeffs {
  std::vector<double> approx;
  std::vector<double> detail;
  int level = 1;
};

inline WaveletCoeffs haar_dwt_step(const std::vector<double>& signal) {
  if (signal.size() < 2) {
    throw TooShort("haar_dwt_step: need at least 2 samples, have " +
                   std::to_string(signal.size()));
  }
  const std::size_t pairs = signal.size() / 2;
  WaveletCoeffs out;
  out.level = 1;
  out.approx.resize(pairs);
  out.detail.resize(pairs);
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double a = signal[2 * k];
    const double b = signal[2 * k + 1];
    out.approx[k] = (a + b) * inv_sqrt2;
    out.detail[k] = (a - b) * inv_sqrt2;
  }
  return out;
}

// Exact inverse of one step (over the even-length prefix that was consumed).
inline std::vector<double> inverse_haar(const std::vector<double>& approx,
                                        const std::vector<double>& detail) {
  if (approx.size() != detail.size()) {
    throw ShapeMismatch("inverse_haar: approx/detail length mismatch");
  }
  std::vector<double> out(approx.size() * 2);
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t k = 0; k < approx.size(); ++k) {
    out[2 * k] = (approx[k] + detail[k]) * inv_sqrt2;
    out[2 * k + 1] = (approx[k] - detail[k]) * inv_sqrt2;
  }
  return out;
}

// Repeated low-pass branch: `level` Haar steps keeping only the
// approximation coefficients each time.
inline std::vector<double> wavelet_approx(const std::vector<double>& signal,
                                          int level) {
  if (level < 1) throw InvalidSpec("wavelet_approx: level must be >= 1");
  std::size_t needed = 1;
  for (int l = 0; l < level; ++l) needed *= 2;
  if (signal.size() < needed) {
    throw TooShort("wavelet_approx: need at least " + std::to_string(needed) +
                   " samples for level " + std::to_string(level) + ", have " +
                   std::to_string(signal.size()));
  }
  std::vector<double> current = signal;
  for (int l = 0; l < level; ++l) {
    current = haar_dwt_step(current).approx;
  }
  return current;
}

}  // namespace faultnet
