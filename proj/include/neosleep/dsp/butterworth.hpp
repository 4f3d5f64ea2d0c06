#pragma once

// Butterworth band-pass design as cascaded second-order sections, plus
// causal and forward-backward (zero-phase) application.
//
// `order` is the order of the analog low-pass prototype. The band-pass
// transform doubles it, so order 4 yields 8 poles in 4 sections. Each band
// edge sits at -3 dB of the single-pass magnitude response.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "neosleep/error.hpp"

namespace neosleep::dsp {

/// One biquad, direct form II transposed, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct FilterSpec {
  int order = 4;
  double low_hz = 0.5;
  double high_hz = 30.0;
  double fs = 256.0;
  std::vector<Biquad> sections;
};

inline FilterSpec design_butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  using cplx = std::complex<double>;
  constexpr double pi = std::numbers::pi;
  if (order < 1) throw Error(Errc::shape_mismatch, "filter order must be at least 1");
  if (!(fs > 2.0 * high_hz)) throw Error(Errc::nyquist_violation, "upper edge at or above Nyquist");
  if (!(low_hz > 0.0 && low_hz < high_hz)) throw Error(Errc::nyquist_violation, "band edges out of order");

  // Pre-warped analog edges for the bilinear transform.
  const double k = 2.0 * fs;
  const double w1 = k * std::tan(pi * low_hz / fs);
  const double w2 = k * std::tan(pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0_sq = w1 * w2;

  // Band-pass transform of each prototype pole, then bilinear map to z.
  std::vector<cplx> analog;
  for (int i = 0; i < order; ++i) {
    const cplx p = std::polar(1.0, pi * (2.0 * i + order + 1) / (2.0 * order));
    const cplx half = p * bw / 2.0;
    const cplx disc = std::sqrt(half * half - w0_sq);
    analog.push_back(half + disc);
    analog.push_back(half - disc);
  }

  // Gain: the analog numerator is bw^order * s^order; bilinear mapping turns
  // the zeros at s = 0 into z = +1 and those at infinity into z = -1.
  cplx gain = std::pow(bw * k, order);
  std::vector<cplx> upper, real;
  for (const cplx& s : analog) {
    gain /= (k - s);
    const cplx z = (k + s) / (k - s);
    if (std::abs(z.imag()) < 1e-12)
      real.push_back({z.real(), 0.0});
    else if (z.imag() > 0.0)
      upper.push_back(z);
  }
  std::sort(upper.begin(), upper.end(), [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
  std::sort(real.begin(), real.end(), [](cplx a, cplx b) { return a.real() < b.real(); });

  FilterSpec spec{order, low_hz, high_hz, fs, {}};
  for (const cplx& z : upper) spec.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
    const double r1 = real[i].real(), r2 = real[i + 1].real();
    spec.sections.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
  }
  const double g = gain.real();
  spec.sections.front().b0 *= g;
  spec.sections.front().b2 *= g;
  return spec;
}

inline std::complex<double> frequency_response(const FilterSpec& spec, double f_hz) {
  const std::complex<double> zinv = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / spec.fs);
  std::complex<double> h = 1.0;
  for (const auto& s : spec.sections)
    h *= (s.b0 + zinv * (s.b1 + zinv * s.b2)) / (1.0 + zinv * (s.a1 + zinv * s.a2));
  return h;
}

inline bool is_stable(const FilterSpec& spec) {
  // A biquad 1 + a1 z^-1 + a2 z^-2 has both roots inside the unit circle
  // iff |a2| < 1 and |a1| < 1 + a2.
  return std::all_of(spec.sections.begin(), spec.sections.end(),
                     [](const Biquad& s) { return std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2; });
}

/// Number of leading/trailing samples reflected around the ends before
/// forward-backward filtering.
inline std::size_t pad_length(const FilterSpec& spec) { return 3 * (2 * spec.sections.size() + 1); }

namespace detail {

struct BiquadState {
  double z1 = 0, z2 = 0;
};

inline double step(const Biquad& s, BiquadState& st, double x) {
  const double y = s.b0 * x + st.z1;
  st.z1 = s.b1 * x - s.a1 * y + st.z2;
  st.z2 = s.b2 * x - s.a2 * y;
  return y;
}

// Steady-state section states for a constant input of `level`.
inline std::vector<BiquadState> steady_state(const FilterSpec& spec, double level) {
  std::vector<BiquadState> states(spec.sections.size());
  double x = level;
  for (std::size_t i = 0; i < spec.sections.size(); ++i) {
    const auto& s = spec.sections[i];
    const double y = x * (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    states[i].z2 = s.b2 * x - s.a2 * y;
    states[i].z1 = s.b1 * x - s.a1 * y + states[i].z2;
    x = y;
  }
  return states;
}

inline void run(const FilterSpec& spec, std::vector<BiquadState>& states, std::span<double> x) {
  for (std::size_t i = 0; i < spec.sections.size(); ++i) {
    const Biquad s = spec.sections[i];
    BiquadState st = states[i];
    for (double& v : x) v = step(s, st, v);
    states[i] = st;
  }
}

}  // namespace detail

/// Single causal pass from rest.
inline std::vector<double> filter_causal(std::span<const double> x, const FilterSpec& spec) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<detail::BiquadState> states(spec.sections.size());
  detail::run(spec, states, y);
  return y;
}

/// Forward then backward pass with odd reflection at both ends and
/// steady-state initial conditions, giving zero net phase and squared
/// magnitude response.
inline std::vector<double> filter_zero_phase(std::span<const double> x, const FilterSpec& spec) {
  const std::size_t pad = pad_length(spec);
  if (x.size() <= pad)
    throw Error(Errc::too_short, std::to_string(x.size()) + " samples, need more than " + std::to_string(pad));
  const std::size_t n = x.size();
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

  auto states = detail::steady_state(spec, ext.front());
  detail::run(spec, states, ext);
  std::reverse(ext.begin(), ext.end());
  states = detail::steady_state(spec, ext.front());
  detail::run(spec, states, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace neosleep::dsp
