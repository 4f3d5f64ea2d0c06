#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neosleep/error.hpp"

namespace neosleep::dsp {

inline constexpr double kTargetFs = 64.0;
inline constexpr std::size_t kEpochSamples = 3840;  // 60 s at 64 Hz

struct EpochTensor {
  std::vector<float> samples;  // kEpochSamples values, microvolts
  std::string channel_label;
  int epoch_index = 0;
  bool valid = true;
};

struct ArtifactConfig {
  double amp_limit_uv = 250.0;
  double flat_run_s = 1.0;
};

/// True when the window holds a sample beyond the amplitude limit or a run
/// of at least flat_run_s worth of identical consecutive samples.
template <class T>
bool has_artifact(std::span<const T> x, double fs, const ArtifactConfig& cfg) {
  const auto flat_len = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(cfg.flat_run_s * fs - 1e-9)));
  std::size_t run = 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(std::abs(static_cast<double>(x[i])) <= cfg.amp_limit_uv)) return true;
    if (i > 0) {
      run = x[i] == x[i - 1] ? run + 1 : 1;
      if (run >= flat_len) return true;
    }
  }
  return false;
}

inline bool reject_artifacts(const EpochTensor& epoch, const ArtifactConfig& cfg) {
  return has_artifact(std::span<const float>(epoch.samples), kTargetFs, cfg);
}

/// Cuts 64 Hz samples into consecutive 3840-sample epochs; a trailing
/// partial minute is dropped.
inline std::vector<EpochTensor> segment_epochs(std::span<const double> x, const std::string& channel_label) {
  std::vector<EpochTensor> epochs;
  const std::size_t n = x.size() / kEpochSamples;
  epochs.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    EpochTensor ep;
    ep.channel_label = channel_label;
    ep.epoch_index = static_cast<int>(e);
    ep.samples.assign(x.begin() + static_cast<std::ptrdiff_t>(e * kEpochSamples),
                      x.begin() + static_cast<std::ptrdiff_t>((e + 1) * kEpochSamples));
    epochs.push_back(std::move(ep));
  }
  return epochs;
}

/// Debug dump: raw little-endian float32 samples plus a JSON sidecar.
inline void dump_epoch(const std::string& stem, const EpochTensor& epoch) {
  {
    std::ofstream out(stem + ".f32", std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + stem + ".f32");
    for (float v : epoch.samples) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      const char le[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                          static_cast<char>((bits >> 16) & 0xFF), static_cast<char>(bits >> 24)};
      out.write(le, 4);
    }
  }
  nlohmann::ordered_json meta;
  meta["channel"] = epoch.channel_label;
  meta["epoch_index"] = epoch.epoch_index;
  meta["fs"] = 64;
  meta["n"] = epoch.samples.size();
  meta["valid"] = epoch.valid;
  std::ofstream out(stem + ".json");
  if (!out) throw Error(Errc::io, "cannot write " + stem + ".json");
  out << meta.dump(2) << '\n';
}

inline EpochTensor load_epoch_dump(const std::string& stem) {
  std::ifstream meta_in(stem + ".json");
  if (!meta_in) throw Error(Errc::io, "cannot open " + stem + ".json");
  const auto meta = nlohmann::json::parse(meta_in);
  EpochTensor ep;
  ep.channel_label = meta.at("channel").get<std::string>();
  ep.epoch_index = meta.at("epoch_index").get<int>();
  ep.valid = meta.value("valid", true);
  const auto n = meta.at("n").get<std::size_t>();
  std::ifstream in(stem + ".f32", std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + stem + ".f32");
  ep.samples.resize(n);
  for (auto& v : ep.samples) {
    unsigned char le[4];
    if (!in.read(reinterpret_cast<char*>(le), 4)) throw Error(Errc::io, stem + ".f32 is truncated");
    const std::uint32_t bits = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
    std::memcpy(&v, &bits, sizeof v);
  }
  return ep;
}

}  // namespace neosleep::dsp
