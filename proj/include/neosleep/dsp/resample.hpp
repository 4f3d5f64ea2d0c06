#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "neosleep/error.hpp"

namespace neosleep::dsp {

/// Reduced up/down factors for fs_out / fs_in, resolving rates to 1 mHz.
inline std::pair<std::int64_t, std::int64_t> rational_ratio(double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) throw Error(Errc::nyquist_violation, "sampling rates must be positive");
  const auto up = static_cast<std::int64_t>(std::llround(fs_out * 1000.0));
  const auto down = static_cast<std::int64_t>(std::llround(fs_in * 1000.0));
  const std::int64_t g = std::gcd(up, down);
  return {up / g, down / g};
}

/// Kaiser-windowed sinc low-pass at `cutoff` (fraction of Nyquist), unit DC gain.
inline std::vector<double> kaiser_lowpass(std::size_t taps, double cutoff, double beta) {
  std::vector<double> h(taps);
  const double mid = 0.5 * static_cast<double>(taps - 1);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  double sum = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double t = static_cast<double>(n) - mid;
    const double x = std::numbers::pi * cutoff * t;
    const double sinc = t == 0.0 ? 1.0 : std::sin(x) / x;
    const double r = mid > 0.0 ? t / mid : 0.0;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[n] = cutoff * sinc * w;
    sum += h[n];
  }
  for (double& v : h) v /= sum;
  return h;
}

/// Polyphase rational resampling with a linear-phase anti-aliasing low-pass
/// at min(fs_in, fs_out) / 2. The filter is centred, so the output has no
/// group delay; the first output sample aligns with the first input sample.
inline std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out = 64.0) {
  const auto [up, down] = rational_ratio(fs_in, fs_out);
  if (x.empty()) return {};
  if (up == 1 && down == 1) return {x.begin(), x.end()};

  const std::int64_t max_rate = std::max(up, down);
  const std::int64_t half_len = 10 * max_rate;
  std::vector<double> h = kaiser_lowpass(static_cast<std::size_t>(2 * half_len + 1), 1.0 / static_cast<double>(max_rate), 5.0);
  for (double& v : h) v *= static_cast<double>(up);

  const auto n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  const auto taps = static_cast<std::int64_t>(h.size());
  std::vector<double> y(static_cast<std::size_t>(n_out));
  for (std::int64_t m = 0; m < n_out; ++m) {
    // Output m sits at upsampled index j = m * down; input i contributes
    // through tap half_len + j - i * up.
    const std::int64_t j = m * down;
    const std::int64_t i_lo = std::max<std::int64_t>(0, (j + half_len - taps + up) / up);
    const std::int64_t i_hi = std::min<std::int64_t>(n_in - 1, (j + half_len) / up);
    double acc = 0.0;
    for (std::int64_t i = i_lo; i <= i_hi; ++i) {
      const std::int64_t tap = half_len + j - i * up;
      if (tap >= 0 && tap < taps) acc += h[static_cast<std::size_t>(tap)] * x[static_cast<std::size_t>(i)];
    }
    y[static_cast<std::size_t>(m)] = acc;
  }
  return y;
}

}  // namespace neosleep::dsp
