#pragma once

// Amplitude-envelope comparator: magnitude of the analytic signal after a
// 1-30 Hz band-pass, summarised per minute.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <fftw3.h>
#include <fmt/format.h>

#include "neosleep/dsp/butterworth.hpp"
#include "neosleep/fft_lock.hpp"
#include "neosleep/metrics/metrics.hpp"
#include "neosleep/recording.hpp"
#include "neosleep/sst/sst.hpp"

namespace neosleep::baseline {

struct EnvelopeConfig {
  double low_hz = 1.0;
  double high_hz = 30.0;
  int order = 4;
  double pad_s = 10.0;
};

/// |x + i H{x}| with the analytic signal built in the frequency domain:
/// negative bins zeroed, positive bins doubled, DC and Nyquist kept.
inline std::vector<double> analytic_magnitude(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::vector<double> in(x.begin(), x.end());
  auto* spec = fftw_alloc_complex(n);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_1d(static_cast<int>(n), spec, spec, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(fwd);
  // r2c fills bins 0..n/2; the rest become the zeroed negative half
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < n; ++k) {
    const bool nyquist = n % 2 == 0 && k == half;
    if (k > half) {
      spec[k][0] = spec[k][1] = 0.0;
      continue;
    }
    const double w = nyquist ? 1.0 : 2.0;
    spec[k][0] *= w;
    spec[k][1] *= w;
  }
  fftw_execute(inv);
  std::vector<double> mag(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::hypot(spec[i][0], spec[i][1]) * scale;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(spec);
  return mag;
}

/// Whole-channel envelope, computed before any epoching so no epoch sees
/// transform edge effects. The channel is extended by mirror reflection (up
/// to pad_s per side) so filter start-up and the circular wrap of the DFT
/// both fall outside the returned range.
inline std::vector<double> analytic_envelope(std::span<const double> x, double fs, const EnvelopeConfig& cfg = {}) {
  const std::size_t n = x.size();
  if (n < 64) throw Error(Errc::too_short, "envelope needs at least 64 samples, got " + std::to_string(n));
  const auto spec = dsp::design_butter_bandpass(cfg.order, cfg.low_hz, cfg.high_hz, fs);
  const auto pad = std::min(n - 1, static_cast<std::size_t>(std::llround(cfg.pad_s * fs)));
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    ext[pad - 1 - i] = x[i + 1];
    ext[pad + n + i] = x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  const auto mag = analytic_magnitude(dsp::filter_zero_phase(ext, spec));
  return {mag.begin() + static_cast<std::ptrdiff_t>(pad), mag.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

struct EnvelopeFeatures {
  double env_mean_uv = 0.0;
  double env_std_uv = 0.0;  // population std
};

/// Per-minute mean and std of an envelope sampled at fs. A trailing partial
/// minute is dropped.
inline std::vector<EnvelopeFeatures> epoch_features(std::span<const double> env, double fs) {
  const auto per_epoch = static_cast<std::size_t>(std::llround(kEpochSeconds * fs));
  std::vector<EnvelopeFeatures> out;
  for (std::size_t lo = 0; per_epoch > 0 && lo + per_epoch <= env.size(); lo += per_epoch) {
    double sum = 0;
    for (std::size_t i = lo; i < lo + per_epoch; ++i) sum += env[i];
    const double mean = sum / static_cast<double>(per_epoch);
    double ss = 0;
    for (std::size_t i = lo; i < lo + per_epoch; ++i) ss += (env[i] - mean) * (env[i] - mean);
    out.push_back({mean, std::sqrt(ss / static_cast<double>(per_epoch))});
  }
  return out;
}

inline std::vector<EnvelopeFeatures> envelope_features(std::span<const double> x, double fs,
                                                       const EnvelopeConfig& cfg = {}) {
  return epoch_features(analytic_envelope(x, fs, cfg), fs);
}

struct Comparison {
  double pearson_mean = 0.0;  // env_mean vs SST p_mean
  double pearson_std = 0.0;
  std::optional<double> roc_mean;  // env_mean as a QS score against truth
  std::optional<double> roc_std;
  std::size_t n_epochs = 0;        // epochs entering the correlation
};

/// Gap epochs of the trace are left out of the correlation. truth may be
/// empty, in which case no ROC is computed.
inline Comparison compare_to_sst(std::span<const EnvelopeFeatures> features, const sst::SstTrace& trace,
                                 std::span<const SleepLabel> truth = {}) {
  if (features.size() != trace.points.size())
    throw Error(Errc::length_mismatch, fmt::format("{} feature epochs vs {} SST epochs", features.size(),
                                                   trace.points.size()));
  if (!truth.empty() && truth.size() != features.size())
    throw Error(Errc::length_mismatch, fmt::format("{} feature epochs vs {} labels", features.size(), truth.size()));
  std::vector<double> mean, stdev, p;
  for (std::size_t e = 0; e < features.size(); ++e) {
    if (trace.points[e].gap()) continue;
    mean.push_back(features[e].env_mean_uv);
    stdev.push_back(features[e].env_std_uv);
    p.push_back(trace.points[e].p_mean);
  }
  Comparison c;
  c.n_epochs = p.size();
  c.pearson_mean = metrics::pearson(mean, p);
  c.pearson_std = metrics::pearson(stdev, p);
  if (!truth.empty()) {
    std::vector<double> all_mean, all_std;
    for (const auto& f : features) {
      all_mean.push_back(f.env_mean_uv);
      all_std.push_back(f.env_std_uv);
    }
    c.roc_mean = metrics::roc_auc(all_mean, truth).auc;
    c.roc_std = metrics::roc_auc(all_std, truth).auc;
  }
  return c;
}

inline void write_features_csv(std::ostream& out, std::span<const EnvelopeFeatures> features) {
  out << "epoch_index,env_mean_uv,env_std_uv\n";
  for (std::size_t e = 0; e < features.size(); ++e)
    out << fmt::format("{},{:.9g},{:.9g}\n", e, features[e].env_mean_uv, features[e].env_std_uv);
}

}  // namespace neosleep::baseline
