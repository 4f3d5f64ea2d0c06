#pragma once

// Synthetic neonatal EEG: alternating AS/QS states with exact ground truth.
//
// AS is continuous 1/f-weighted noise. QS alternates high-voltage bursts
// with low-voltage inter-burst intervals. Burst and inter-burst amplitudes
// are peak values; the carrier is scaled so its RMS is peak / kPeakFactor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <fftw3.h>
#include <fmt/format.h>

#include "neosleep/error.hpp"
#include "neosleep/fft_lock.hpp"
#include "neosleep/recording.hpp"
#include "neosleep/seed.hpp"

namespace neosleep::synth {

inline constexpr double kPeakFactor = 3.5;
inline constexpr double kSampleLimitUv = 500.0;

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_subjects = 4;
  double duration_min = 120.0;
  double fs = 256.0;
  double cycle_min_lo = 40.0, cycle_min_hi = 70.0;
  double qs_fraction = 0.35;
  double as_rms_lo = 15.0, as_rms_hi = 30.0;
  double burst_peak_lo = 50.0, burst_peak_hi = 150.0;
  double burst_s_lo = 3.0, burst_s_hi = 8.0;
  double ibi_peak_lo = 5.0, ibi_peak_hi = 25.0;
  double ibi_s_lo = 3.0, ibi_s_hi = 10.0;
  double artifacts_per_hour = 0.0;

  void validate() const {
    auto range = [](double lo, double hi, const char* name) {
      if (!(lo > 0.0 && lo <= hi && std::isfinite(hi)))
        throw Error(Errc::config, fmt::format("synth.{}: need 0 < lo <= hi, got [{}, {}]", name, lo, hi));
    };
    if (n_subjects < 1) throw Error(Errc::config, "synth.n_subjects must be at least 1");
    if (!(duration_min >= 1.0)) throw Error(Errc::config, "synth.duration_min must be at least 1");
    if (!(fs >= 128.0)) throw Error(Errc::config, "synth.fs must be at least 128 Hz");
    if (!(qs_fraction > 0.0 && qs_fraction < 1.0)) throw Error(Errc::config, "synth.qs_fraction must lie in (0, 1)");
    range(cycle_min_lo, cycle_min_hi, "cycle_min");
    range(as_rms_lo, as_rms_hi, "as_rms");
    range(burst_peak_lo, burst_peak_hi, "burst_peak");
    range(burst_s_lo, burst_s_hi, "burst_s");
    range(ibi_peak_lo, ibi_peak_hi, "ibi_peak");
    range(ibi_s_lo, ibi_s_hi, "ibi_s");
    if (!(artifacts_per_hour >= 0.0)) throw Error(Errc::config, "synth.artifacts_per_hour must be non-negative");
  }
};

enum class State { AS, QS };

struct StateSegment {
  State state = State::AS;
  double start_s = 0.0, end_s = 0.0;
};

struct SynthSubject {
  Recording recording;               // F3, F4, P3, P4 referential
  AnnotationTrack truth;             // QS intervals of the state machine
  std::vector<StateSegment> segments;
  std::vector<int> artifact_epochs;  // minutes carrying an injected movement
};

inline const std::vector<std::string>& referential_labels() {
  static const std::vector<std::string> labels{"F3", "F4", "P3", "P4"};
  return labels;
}

namespace detail {

// Movement artifacts hit every electrode with a different sign and weight,
// so each bipolar difference still carries at least 1.3x the amplitude.
inline constexpr double kMovementGain[4] = {1.0, -1.0, -0.5, 0.8};

/// Unit-RMS noise with a 1/f power spectrum confined to 0.5-30 Hz.
inline std::vector<double> pink_noise(std::size_t n, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  const std::size_t bins = n / 2 + 1;
  auto* spec = fftw_alloc_complex(bins);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, x.data(), FFTW_ESTIMATE);
  }
  fftw_execute(fwd);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    const double w = f >= 0.5 && f <= 30.0 ? 1.0 / std::sqrt(f) : 0.0;
    spec[k][0] *= w;
    spec[k][1] *= w;
  }
  fftw_execute(inv);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(spec);
  double ss = 0;
  for (double v : x) ss += v * v;
  const double scale = ss > 0 ? 1.0 / std::sqrt(ss / static_cast<double>(n)) : 0.0;
  for (auto& v : x) v *= scale;
  return x;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// AS/QS timeline in whole seconds. The subject enters at a random phase
/// of its first cycle; every cycle keeps the configured QS share.
inline std::vector<StateSegment> state_timeline(const SynthConfig& cfg, std::mt19937_64& rng) {
  const double total = std::round(cfg.duration_min * 60.0);
  const double period = uniform(rng, cfg.cycle_min_lo, cfg.cycle_min_hi) * 60.0;
  std::vector<StateSegment> segs;
  double t = -std::round(uniform(rng, 0.0, period));
  while (t < total) {
    const double len = period * uniform(rng, 0.9, 1.1);
    const double as_len = std::max(1.0, std::round(len * (1.0 - cfg.qs_fraction)));
    const double qs_len = std::max(1.0, std::round(len * cfg.qs_fraction));
    for (auto [state, d] : {std::pair{State::AS, as_len}, std::pair{State::QS, qs_len}}) {
      const double a = std::max(t, 0.0), b = std::min(t + d, total);
      if (b > a) {
        if (!segs.empty() && segs.back().state == state)
          segs.back().end_s = b;
        else
          segs.push_back({state, a, b});
      }
      t += d;
    }
  }
  return segs;
}

/// One burst or inter-burst interval. All channels share the timing and
/// only scale the amplitude.
struct QsEvent {
  double start_s, end_s, peak_uv;
};

inline std::vector<QsEvent> qs_events(const SynthConfig& cfg, const StateSegment& seg, std::mt19937_64& rng) {
  std::vector<QsEvent> ev;
  bool burst = uniform(rng, 0.0, 1.0) < 0.5;
  for (double t = seg.start_s; t < seg.end_s; burst = !burst) {
    const double d = burst ? uniform(rng, cfg.burst_s_lo, cfg.burst_s_hi) : uniform(rng, cfg.ibi_s_lo, cfg.ibi_s_hi);
    const double peak = burst ? uniform(rng, cfg.burst_peak_lo, cfg.burst_peak_hi)
                              : uniform(rng, cfg.ibi_peak_lo, cfg.ibi_peak_hi);
    ev.push_back({t, std::min(t + d, seg.end_s), peak});
    t += d;
  }
  return ev;
}

/// Centered moving average; softens amplitude steps to ~0.25 s ramps.
inline void smooth_in_place(std::vector<double>& x, std::size_t width) {
  if (width < 2 || x.size() < width) return;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  const std::size_t h = width / 2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= h ? i - h : 0, hi = std::min(x.size(), i + h + 1);
    x[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
}

inline void add_movement(Recording& rec, double center_s, double amp_uv) {
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    auto& ch = rec.channels[c];
    const double gain = kMovementGain[c % 4];
    const auto half = static_cast<std::ptrdiff_t>(std::llround(0.5 * ch.fs));
    const auto mid = static_cast<std::ptrdiff_t>(std::llround(center_s * ch.fs));
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
      const std::ptrdiff_t k = mid + i;
      if (k < 0 || k >= static_cast<std::ptrdiff_t>(ch.samples.size())) continue;
      const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(half)));
      ch.samples[static_cast<std::size_t>(k)] += gain * amp_uv * w;
    }
  }
}

/// Poisson-many movement bursts, each placed well inside one minute.
inline std::vector<int> add_movements(Recording& rec, double per_hour, double amp_lo, double amp_hi,
                                      std::mt19937_64& rng) {
  const int n_epochs = static_cast<int>(std::floor(rec.duration_s / kEpochSeconds));
  std::vector<int> epochs;
  if (per_hour <= 0.0 || n_epochs == 0) return epochs;
  const int n = std::poisson_distribution<int>(per_hour * rec.duration_s / 3600.0)(rng);
  for (int k = 0; k < n; ++k) {
    const int e = std::uniform_int_distribution<int>(0, n_epochs - 1)(rng);
    const double offset = uniform(rng, 5.0, kEpochSeconds - 5.0);
    add_movement(rec, e * kEpochSeconds + offset, uniform(rng, amp_lo, amp_hi));
    epochs.push_back(e);
  }
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  return epochs;
}

}  // namespace detail

/// Subject `index` (0-based) of the cohort described by cfg. Streams are
/// split from the master seed so subjects can be built in any order.
inline SynthSubject generate_subject(const SynthConfig& cfg, int index) {
  cfg.validate();
  const std::uint64_t subject_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index) + 1);
  std::mt19937_64 timeline_rng(derive_seed(subject_seed, 1));
  std::mt19937_64 artifact_rng(derive_seed(subject_seed, 2));

  SynthSubject out;
  out.recording.subject_id = fmt::format("synth{:02d}", index + 1);
  out.recording.duration_s = std::round(cfg.duration_min * 60.0);
  out.segments = detail::state_timeline(cfg, timeline_rng);
  out.truth.expert_id = "synth";
  for (const auto& s : out.segments)
    if (s.state == State::QS) out.truth.qs_intervals.push_back({s.start_s, s.end_s - s.start_s});

  const double as_rms = detail::uniform(timeline_rng, cfg.as_rms_lo, cfg.as_rms_hi);
  std::vector<std::vector<detail::QsEvent>> events;
  for (const auto& s : out.segments)
    events.push_back(s.state == State::QS ? detail::qs_events(cfg, s, timeline_rng) : std::vector<detail::QsEvent>{});

  const auto n = static_cast<std::size_t>(std::llround(out.recording.duration_s * cfg.fs));
  // neighbouring electrodes share half their variance
  std::mt19937_64 shared_rng(derive_seed(subject_seed, 100));
  const auto shared = detail::pink_noise(n, cfg.fs, shared_rng);
  constexpr double kShared = 0.5;
  const double own = std::sqrt(1.0 - kShared * kShared);

  const auto& labels = referential_labels();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    std::mt19937_64 rng(derive_seed(subject_seed, 101 + c));
    const double gain = detail::uniform(rng, 0.85, 1.15);
    std::vector<double> env(n, 0.0);
    auto fill = [&](double a_s, double b_s, double rms) {
      const auto a = static_cast<std::size_t>(std::llround(a_s * cfg.fs));
      const auto b = std::min(n, static_cast<std::size_t>(std::llround(b_s * cfg.fs)));
      for (std::size_t i = a; i < b; ++i) env[i] = rms * gain;
    };
    for (std::size_t s = 0; s < out.segments.size(); ++s) {
      if (out.segments[s].state == State::AS)
        fill(out.segments[s].start_s, out.segments[s].end_s, as_rms);
      else
        for (const auto& ev : events[s]) fill(ev.start_s, ev.end_s, ev.peak_uv / kPeakFactor);
    }
    detail::smooth_in_place(env, static_cast<std::size_t>(0.25 * cfg.fs) | 1u);
    const auto noise = detail::pink_noise(n, cfg.fs, rng);
    ChannelSignal ch{labels[c], cfg.fs, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i)
      ch.samples[i] = std::clamp(env[i] * (kShared * shared[i] + own * noise[i]), -kSampleLimitUv, kSampleLimitUv);
    out.recording.channels.push_back(std::move(ch));
  }
  out.artifact_epochs = detail::add_movements(out.recording, cfg.artifacts_per_hour, 300.0, 400.0, artifact_rng);
  return out;
}

inline std::vector<SynthSubject> generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SynthSubject> out;
  out.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int i = 0; i < cfg.n_subjects; ++i) out.push_back(generate_subject(cfg, i));
  return out;
}

enum class NoiseKind { ecg_like, movement, line };

struct NoiseConfig {
  double amplitude_uv = 30.0;
  std::uint64_t seed = 1;
  double ecg_rate_hz = 1.5;    // spike train rate, 1-2 Hz
  double line_hz = 50.0;
  double events_per_hour = 6.0;  // movement
};

/// Adds a contaminant to every channel. Ground truth is untouched; zero
/// amplitude returns the input unchanged.
inline Recording inject_noise(Recording rec, NoiseKind kind, const NoiseConfig& cfg = {}) {
  if (cfg.amplitude_uv == 0.0) return rec;
  std::mt19937_64 rng(cfg.seed);
  switch (kind) {
    case NoiseKind::ecg_like: {
      // narrow QRS-like spikes, strongest on the frontal leads
      constexpr double kGain[4] = {1.0, 0.8, 0.6, 0.4};
      const double sigma = 0.01;
      for (std::size_t c = 0; c < rec.channels.size(); ++c) {
        auto& ch = rec.channels[c];
        const double phase = detail::uniform(rng, 0.0, 1.0 / cfg.ecg_rate_hz);
        const auto reach = static_cast<std::ptrdiff_t>(std::ceil(5 * sigma * ch.fs));
        for (double t = phase; t * ch.fs < static_cast<double>(ch.samples.size()); t += 1.0 / cfg.ecg_rate_hz) {
          const auto mid = static_cast<std::ptrdiff_t>(std::llround(t * ch.fs));
          for (std::ptrdiff_t k = mid - reach; k <= mid + reach; ++k) {
            if (k < 0 || k >= static_cast<std::ptrdiff_t>(ch.samples.size())) continue;
            const double dt = static_cast<double>(k) / ch.fs - t;
            ch.samples[static_cast<std::size_t>(k)] += kGain[c % 4] * cfg.amplitude_uv * std::exp(-0.5 * dt * dt / (sigma * sigma));
          }
        }
      }
      break;
    }
    case NoiseKind::movement:
      detail::add_movements(rec, cfg.events_per_hour, cfg.amplitude_uv, cfg.amplitude_uv, rng);
      break;
    case NoiseKind::line:
      for (auto& ch : rec.channels) {
        const double phase = detail::uniform(rng, 0.0, 2 * std::numbers::pi);
        for (std::size_t i = 0; i < ch.samples.size(); ++i)
          ch.samples[i] += cfg.amplitude_uv * std::sin(2 * std::numbers::pi * cfg.line_hz * static_cast<double>(i) / ch.fs + phase);
      }
      break;
  }
  return rec;
}

}  // namespace neosleep::synth
