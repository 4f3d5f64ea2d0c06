#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "neosleep/dsp/butterworth.hpp"
#include "neosleep/dsp/epochs.hpp"
#include "neosleep/dsp/resample.hpp"
#include "neosleep/recording.hpp"

namespace neosleep::dsp {

struct PreprocessConfig {
  ArtifactConfig artifact;
  int filter_order = 4;
  double low_hz = 0.5;
  double high_hz = 30.0;
};

/// Runs the fixed chain on one channel: artifact scan of each raw minute,
/// band-pass (zero phase), resampling to 64 Hz, segmentation. Epochs whose
/// raw minute tripped the scan come back with valid = false.
inline std::vector<EpochTensor> preprocess_channel(std::span<const double> raw, double fs,
                                                   const std::string& label, const PreprocessConfig& cfg = {}) {
  enum class Stage { scan, bandpass, resample, segment };
  Stage stage = Stage::scan;
  auto advance = [&stage](Stage next) {
    if (static_cast<int>(next) != static_cast<int>(stage) + 1)
      throw Error(Errc::shape_mismatch, "preprocessing stages out of order");
    stage = next;
  };

  const double samples_per_epoch = kEpochSeconds * fs;
  const auto n_raw_epochs = static_cast<std::size_t>(std::floor(static_cast<double>(raw.size()) / samples_per_epoch));
  std::vector<bool> rejected(n_raw_epochs);
  for (std::size_t e = 0; e < n_raw_epochs; ++e) {
    const auto lo = static_cast<std::size_t>(std::llround(static_cast<double>(e) * samples_per_epoch));
    const auto hi = static_cast<std::size_t>(std::llround(static_cast<double>(e + 1) * samples_per_epoch));
    rejected[e] = has_artifact(raw.subspan(lo, hi - lo), fs, cfg.artifact);
  }

  advance(Stage::bandpass);
  const FilterSpec spec = design_butter_bandpass(cfg.filter_order, cfg.low_hz, cfg.high_hz, fs);
  const std::vector<double> filtered = filter_zero_phase(raw, spec);

  advance(Stage::resample);
  const std::vector<double> at_64 = resample(filtered, fs, kTargetFs);

  advance(Stage::segment);
  std::vector<EpochTensor> epochs = segment_epochs(at_64, label);
  for (auto& ep : epochs) {
    const auto e = static_cast<std::size_t>(ep.epoch_index);
    ep.valid = e < rejected.size() && !rejected[e];
  }
  return epochs;
}

/// All channels of a recording, concatenated channel by channel.
inline std::vector<EpochTensor> preprocess_recording(const Recording& rec, const PreprocessConfig& cfg = {}) {
  std::vector<EpochTensor> out;
  for (const auto& ch : rec.channels) {
    auto epochs = preprocess_channel(ch.samples, ch.fs, ch.label, cfg);
    out.insert(out.end(), std::make_move_iterator(epochs.begin()), std::make_move_iterator(epochs.end()));
  }
  return out;
}

}  // namespace neosleep::dsp
