#pragma once

// Preprocessing for 6-axis IMU streams: resampling, two-level windowing,
// per-window statistics features and train-split normalization.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egocharm/error.hpp"
#include "egocharm/tensor.hpp"

namespace egocharm {

inline constexpr std::size_t kImuChannels = 6;
inline constexpr std::size_t kFeaturesPerChannel = 5;
inline constexpr std::size_t kFeatureCount = kImuChannels * kFeaturesPerChannel;
inline constexpr double kStdFloor = 1e-8;

inline const std::array<const char*, kImuChannels> kChannelNames{"ax", "ay", "az", "gx", "gy", "gz"};

/// One participant's continuous stream: accelerometer (m/s^2) then gyroscope (rad/s).
struct ImuRecording {
  std::string participant_id;
  std::vector<double> timestamps;
  std::array<std::vector<double>, kImuChannels> channels;
  std::optional<std::string> label;

  std::size_t length() const noexcept { return timestamps.size(); }

  /// Throws on unequal channel lengths, non-increasing timestamps or non-finite values.
  void validate() const {
    for (std::size_t c = 0; c < kImuChannels; ++c)
      require(channels[c].size() == timestamps.size(), ErrorCode::ShapeMismatch,
              "channel " + std::string(kChannelNames[c]) + " length differs from timestamp count");
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
      require(std::isfinite(timestamps[i]), ErrorCode::ParseError, "non-finite timestamp at row " + std::to_string(i));
      if (i > 0)
        require(timestamps[i] > timestamps[i - 1], ErrorCode::NonMonotonicTimestamps,
                "timestamp at row " + std::to_string(i) + " does not increase");
    }
    for (std::size_t c = 0; c < kImuChannels; ++c)
      for (std::size_t i = 0; i < channels[c].size(); ++i)
        require(std::isfinite(channels[c][i]), ErrorCode::ParseError,
                "non-finite value in channel " + std::string(kChannelNames[c]) + " at row " + std::to_string(i));
  }
};

/// Fixed-duration slice of a recording, stored as 6 x T.
struct WindowedSample {
  Tensor data;
  int label = -1;
  std::string participant_id;
  double start_time = 0.0;
  double rate_hz = 0.0;

  std::size_t length() const noexcept { return data.dim(1); }
  double duration() const noexcept { return static_cast<double>(length()) / rate_hz; }
};

/// Per channel: mean, max, min, population variance, peak-to-peak.
using FeatureVector = std::array<double, kFeatureCount>;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  /// Indices whose raw std fell below kStdFloor and was floored.
  std::vector<std::size_t> degenerate;
};

namespace detail {

/// Converts seconds * rate to an exact sample count or throws.
inline std::size_t exact_samples(double seconds, double rate_hz, const char* what) {
  const double n = seconds * rate_hz;
  const double rounded = std::round(n);
  require(seconds > 0 && rate_hz > 0, ErrorCode::InvalidArgument, std::string(what) + " must be positive");
  require(std::abs(n - rounded) < 1e-9 * std::max(1.0, n) && rounded >= 1, ErrorCode::NonDivisibleWindow,
          std::string(what) + " of " + std::to_string(seconds) + " s is not a whole number of samples at " +
              std::to_string(rate_hz) + " Hz");
  return static_cast<std::size_t>(rounded);
}

}  // namespace detail

/// Linear interpolation onto a uniform grid anchored at the first timestamp.
inline ImuRecording resample_linear(const ImuRecording& rec, double target_hz) {
  require(target_hz > 0, ErrorCode::InvalidArgument, "target rate must be positive");
  require(rec.length() >= 2, ErrorCode::EmptyRecording, "resampling needs at least 2 samples");
  rec.validate();

  const double t0 = rec.timestamps.front();
  const double span = rec.timestamps.back() - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * target_hz + 1e-9)) + 1;

  ImuRecording out;
  out.participant_id = rec.participant_id;
  out.label = rec.label;
  out.timestamps.resize(count);
  for (auto& ch : out.channels) ch.resize(count);

  std::size_t j = 0;  // rec.timestamps[j] <= t < rec.timestamps[j + 1]
  for (std::size_t i = 0; i < count; ++i) {
    const double t = t0 + static_cast<double>(i) / target_hz;
    out.timestamps[i] = t;
    while (j + 2 < rec.length() && rec.timestamps[j + 1] <= t) ++j;
    const double ta = rec.timestamps[j];
    const double tb = rec.timestamps[j + 1];
    const double frac = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      const double a = rec.channels[c][j];
      const double b = rec.channels[c][j + 1];
      out.channels[c][i] = frac == 0.0 ? a : (frac == 1.0 ? b : a + frac * (b - a));
    }
  }
  return out;
}

/// Sliding windows over a recording already sampled at rate_hz.
/// Short recordings yield no windows.
inline std::vector<WindowedSample> window(const ImuRecording& rec, double window_s, double stride_s, double rate_hz,
                                          int label = -1) {
  const std::size_t width = detail::exact_samples(window_s, rate_hz, "window");
  const std::size_t stride = detail::exact_samples(stride_s, rate_hz, "stride");
  std::vector<WindowedSample> out;
  const std::size_t n = rec.length();
  if (n < width) return out;
  const std::size_t count = (n - width) / stride + 1;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t begin = w * stride;
    WindowedSample s;
    s.data = Tensor({kImuChannels, width});
    for (std::size_t c = 0; c < kImuChannels; ++c)
      for (std::size_t t = 0; t < width; ++t) s.data(c, t) = rec.channels[c][begin + t];
    s.label = label;
    s.participant_id = rec.participant_id;
    s.start_time = rec.timestamps.empty() ? 0.0 : rec.timestamps[begin];
    s.rate_hz = rate_hz;
    out.push_back(std::move(s));
  }
  return out;
}

/// Partitions a high-level window into contiguous non-overlapping low-level windows.
inline std::vector<WindowedSample> split_low_level(const WindowedSample& hl, double ll_window_s) {
  const std::size_t width = detail::exact_samples(ll_window_s, hl.rate_hz, "low-level window");
  const std::size_t total = hl.length();
  require(total % width == 0, ErrorCode::NonDivisibleWindow,
          "high-level window of " + std::to_string(total) + " samples is not divisible into " + std::to_string(width) +
              "-sample windows");
  const std::size_t n = total / width;
  std::vector<WindowedSample> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    WindowedSample s;
    s.data = Tensor({kImuChannels, width});
    for (std::size_t c = 0; c < kImuChannels; ++c)
      for (std::size_t t = 0; t < width; ++t) s.data(c, t) = hl.data(c, w * width + t);
    s.label = hl.label;
    s.participant_id = hl.participant_id;
    s.start_time = hl.start_time + static_cast<double>(w * width) / hl.rate_hz;
    s.rate_hz = hl.rate_hz;
    out.push_back(std::move(s));
  }
  return out;
}

inline FeatureVector extract_features(const Tensor& window) {
  require(window.rank() == 2 && window.dim(0) == kImuChannels && window.dim(1) > 0, ErrorCode::ShapeMismatch,
          "features need a non-empty 6xT window, got " + window.shape_string());
  FeatureVector f{};
  const std::size_t len = window.dim(1);
  for (std::size_t c = 0; c < kImuChannels; ++c) {
    auto row = window.row(c);
    double sum = 0.0, hi = row[0], lo = row[0];
    for (double v : row) {
      sum += v;
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    const double mean = sum / static_cast<double>(len);
    double ss = 0.0;
    for (double v : row) ss += (v - mean) * (v - mean);
    double* out = f.data() + c * kFeaturesPerChannel;
    out[0] = mean;
    out[1] = hi;
    out[2] = lo;
    out[3] = ss / static_cast<double>(len);
    out[4] = hi - lo;
  }
  return f;
}

inline FeatureVector extract_features(const WindowedSample& w) { return extract_features(w.data); }

namespace detail {

inline NormStats finish_stats(std::vector<double> sum, std::vector<double> sq, double count) {
  NormStats stats;
  stats.mean = std::move(sum);
  stats.stddev = std::move(sq);
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    double sd = std::sqrt(stats.stddev[i] / count);
    if (!(sd >= kStdFloor)) {
      sd = kStdFloor;
      stats.degenerate.push_back(i);
    }
    stats.stddev[i] = sd;
  }
  return stats;
}

}  // namespace detail

/// Global per-channel statistics over every time point of every training window.
inline NormStats fit_channel_stats(std::span<const WindowedSample> train) {
  require(!train.empty(), ErrorCode::InvalidArgument, "cannot fit normalization on an empty split");
  std::vector<double> mean(kImuChannels, 0.0), sq(kImuChannels, 0.0);
  double count = 0.0;
  for (const auto& s : train) {
    for (std::size_t c = 0; c < kImuChannels; ++c)
      for (double v : s.data.row(c)) mean[c] += v;
    count += static_cast<double>(s.length());
  }
  for (auto& m : mean) m /= count;
  for (const auto& s : train)
    for (std::size_t c = 0; c < kImuChannels; ++c)
      for (double v : s.data.row(c)) sq[c] += (v - mean[c]) * (v - mean[c]);
  return detail::finish_stats(std::move(mean), std::move(sq), count);
}

inline NormStats fit_feature_stats(std::span<const FeatureVector> train) {
  require(!train.empty(), ErrorCode::InvalidArgument, "cannot fit normalization on an empty split");
  std::vector<double> mean(kFeatureCount, 0.0), sq(kFeatureCount, 0.0);
  for (const auto& f : train)
    for (std::size_t i = 0; i < kFeatureCount; ++i) mean[i] += f[i];
  const auto count = static_cast<double>(train.size());
  for (auto& m : mean) m /= count;
  for (const auto& f : train)
    for (std::size_t i = 0; i < kFeatureCount; ++i) sq[i] += (f[i] - mean[i]) * (f[i] - mean[i]);
  return detail::finish_stats(std::move(mean), std::move(sq), count);
}

/// Normalizes a 6xT window channel-wise.
inline Tensor apply_norm(const Tensor& window, const NormStats& stats) {
  require(window.rank() == 2 && window.dim(0) == stats.mean.size(), ErrorCode::ShapeMismatch,
          "normalization stats do not match window channels");
  Tensor out = window;
  for (std::size_t c = 0; c < window.dim(0); ++c)
    for (auto& v : out.row(c)) v = (v - stats.mean[c]) / stats.stddev[c];
  return out;
}

inline FeatureVector apply_norm(const FeatureVector& features, const NormStats& stats) {
  require(stats.mean.size() == kFeatureCount, ErrorCode::ShapeMismatch, "feature stats must have 30 entries");
  FeatureVector out{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (features[i] - stats.mean[i]) / stats.stddev[i];
  return out;
}

}  // namespace egocharm
