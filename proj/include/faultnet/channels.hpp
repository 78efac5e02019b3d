#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "faultnet/errors.hpp"
#include "faultnet/ingest.hpp"
#include "faultnet/tensor.hpp"

namespace faultnet {

// FaultNet input construction: the raw segment reshaped row-major to HxW,
// optionally stacked with sliding-window mean and median channels. The
// derived channels are computed on the 1-D signal first (the filter runs
// front to end over the samples), then reshaped the same way. The signal is
// padded with window-1 zeros at the tail so every channel keeps the
// segment's length.

inline std::vector<double> sliding_mean_channel(const std::vector<double>& values,
                                                std::size_t window = 10) {
  if (window < 1) throw InvalidSpec("sliding_mean_channel: window must be >= 1");
  if (values.empty()) throw InvalidSpec("sliding_mean_channel: empty input");
  const std::size_t n = values.size();
  std::vector<double> padded(values);
  padded.resize(n + window - 1, 0.0);
  std::vector<double> out(n);
  // Fresh left-to-right sum per window, divided (not multiplied by a
  // reciprocal): bit-identical to the obvious reference loop, which a
  // rolling sum would not be.
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = i; j < i + window; ++j) sum += padded[j];
    out[i] = sum / static_cast<double>(window);
  }
  return out;
}

inline std::vector<double> sliding_median_channel(
    const std::vector<double>& values, std::size_t window = 10) {
  if (window < 1) throw InvalidSpec("sliding_median_channel: window must be >= 1");
  if (values.empty()) throw InvalidSpec("sliding_median_channel: empty input");
  const std::size_t n = values.size();
  std::vector<double> padded(values);
  padded.resize(n + window - 1, 0.0);
  std::vector<double> out(n);
  std::vector<double> buf(window);
  const std::size_t mid = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(padded.begin() + i, padded.begin() + i + window, buf.begin());
    std::sort(buf.begin(), buf.end());
    if (window % 2 == 1) {
      out[i] = buf[mid];
    } else {
      // Even window: mean of the two central order statistics.
      out[i] = 0.5 * (buf[mid - 1] + buf[mid]);
    }
  }
  return out;
}

struct ChannelFlags {
  bool mean = false;
  bool median = false;

  std::size_t count() const { return 1 + (mean ? 1 : 0) + (median ? 1 : 0); }
};

struct ChannelTensor {
  Tensor data;  // C x H x W
  int label = 0;
};

inline ChannelTensor stack_and_reshape(const Segment& segment,
                                       const ChannelFlags& flags,
                                       std::size_t h, std::size_t w,
                                       std::size_t window = 10) {
  if (segment.values.size() != h * w) {
    throw ShapeMismatch("stack_and_reshape: segment of " +
                        std::to_string(segment.values.size()) +
                        " samples cannot fill " + std::to_string(h) + "x" +
                        std::to_string(w));
  }
  const std::size_t channels = flags.count();
  ChannelTensor out;
  out.label = segment.label;
  out.data = Tensor({channels, h, w});

  auto write_channel = [&](std::size_t c, const std::vector<double>& values) {
    std::copy(values.begin(), values.end(),
              out.data.data() + c * h * w);  // row-major reshape
  };

  write_channel(0, segment.values);
  std::size_t c = 1;
  if (flags.mean) write_channel(c++, sliding_mean_channel(segment.values, window));
  if (flags.median) write_channel(c++, sliding_median_channel(segment.values, window));
  return out;
}

// Convenience: channelize a whole dataset with a square reshape inferred
// from the segment length.
inline std::vector<ChannelTensor> channelize_segments(
    const std::vector<Segment>& segments, const ChannelFlags& flags,
    std::size_t h, std::size_t w, std::size_t window = 10) {
  std::vector<ChannelTensor> out;
  out.reserve(segments.size());
  for (const Segment& s : segments) {
    out.push_back(stack_and_reshape(s, flags, h, w, window));
  }
  return out;
}

// The side of the square image for a segment length, when one exists
// (1600 -> 40, 2500 -> 50).
inline std::size_t square_side(std::size_t segment_length) {
  std::size_t side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(segment_length))));
  if (side * side != segment_length) {
    throw ShapeMismatch("segment length " + std::to_string(segment_length) +
                        " is not a perfect square");
  }
  return side;
}

}  // namespace faultnet
