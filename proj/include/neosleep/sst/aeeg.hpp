#pragma once

// Amplitude-integrated EEG companion trend.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "neosleep/dsp/butterworth.hpp"
#include "neosleep/dsp/epochs.hpp"
#include "neosleep/recording.hpp"

namespace neosleep::sst {

struct AeegBand {
  double lower_uv = 0.0;  // 10th percentile
  double upper_uv = 0.0;  // 90th percentile
};

struct AeegConfig {
  double low_hz = 2.0;
  double high_hz = 15.0;
  double smooth_s = 0.5;
  double lower_pct = 10.0;
  double upper_pct = 90.0;
};

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double pct) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Band-pass, rectify, moving average, then per-epoch percentiles of the
/// smoothed amplitude. Input is a continuous 64 Hz signal in µV; a trailing
/// partial epoch is dropped.
inline std::vector<AeegBand> compute_aeeg(std::span<const double> x, const AeegConfig& cfg = {},
                                          double fs = dsp::kTargetFs) {
  const auto epoch_len = static_cast<std::size_t>(std::llround(kEpochSeconds * fs));
  const std::size_t n_epochs = x.size() / epoch_len;
  std::vector<AeegBand> out;
  if (n_epochs == 0) return out;

  const auto spec = dsp::design_butter_bandpass(4, cfg.low_hz, cfg.high_hz, fs);
  std::vector<double> y = dsp::filter_zero_phase(x.first(n_epochs * epoch_len), spec);
  for (auto& v : y) v = std::abs(v);

  // centered moving average, shrinking at the ends
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.smooth_s * fs)));
  std::vector<double> prefix(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i];
  std::vector<double> smooth(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t a = i >= w / 2 ? i - w / 2 : 0;
    const std::size_t b = std::min(y.size(), a + w);
    smooth[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
  }

  for (std::size_t e = 0; e < n_epochs; ++e) {
    std::vector<double> seg(smooth.begin() + static_cast<std::ptrdiff_t>(e * epoch_len),
                            smooth.begin() + static_cast<std::ptrdiff_t>((e + 1) * epoch_len));
    out.push_back({percentile(seg, cfg.lower_pct), percentile(std::move(seg), cfg.upper_pct)});
  }
  return out;
}

/// Semilogarithmic aEEG display scale: 0-10 µV linear on the lower half,
/// 10-100 µV logarithmic on the upper half. Returns [0, 1].
inline double aeeg_display_fraction(double uv) {
  if (uv <= 0.0) return 0.0;
  if (uv <= 10.0) return 0.5 * uv / 10.0;
  return std::min(1.0, 0.5 + 0.5 * std::log10(uv / 10.0));
}

}  // namespace neosleep::sst
