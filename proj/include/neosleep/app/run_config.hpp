#pragma once

// The one JSON document every CLI command reads. Every key is optional;
// unknown keys and wrong types are rejected with the offending field path.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "neosleep/dsp/preprocess.hpp"
#include "neosleep/recording.hpp"
#include "neosleep/synth/synth.hpp"
#include "neosleep/train/config.hpp"

namespace neosleep::app {

struct SstSettings {
  double threshold = 0.5;
  int window = 5;
  std::vector<double> weights;  // empty = uniform
};

struct Paths {
  std::string data_dir;     // *.edf + annotation csvs
  std::string out_dir = "out";
  std::string recording;    // single EDF for preprocess / infer / baseline
  std::string checkpoint;   // manifest path or stem
  std::vector<std::string> annotations;
  std::string sst_csv;
};

struct RunConfig {
  std::uint64_t seed = 1;
  train::TrainConfig train;
  dsp::PreprocessConfig preprocess;
  synth::SynthConfig synth;
  SstSettings sst;
  std::vector<ChannelPair> channel_pairs = default_bipolar_pairs();
  std::string baseline_channel = "P3-P4";
  Paths paths;

  /// Pushes the master seed into every module that draws random numbers.
  void apply_seed() {
    train.seed = seed;
    synth.seed = seed;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::config, what); };
    train.validate();
    synth.validate();
    if (preprocess.filter_order < 1) fail("preprocess.filter_order must be at least 1");
    if (!(preprocess.low_hz > 0 && preprocess.low_hz < preprocess.high_hz))
      fail("preprocess: need 0 < low_hz < high_hz");
    if (!(preprocess.high_hz < 32.0)) fail("preprocess.high_hz must stay below the 32 Hz Nyquist of the 64 Hz output");
    if (!(preprocess.artifact.amp_limit_uv > 0)) fail("artifact.amp_limit_uv must be positive");
    if (!(preprocess.artifact.flat_run_s > 0)) fail("artifact.flat_run_s must be positive");
    if (!(sst.threshold > 0 && sst.threshold < 1)) fail("sst.threshold must lie in (0, 1)");
    if (sst.window < 1 || sst.window % 2 == 0) fail("sst.window must be a positive odd number");
    for (double w : sst.weights)
      if (!(w >= 0)) fail("sst.weights must be non-negative");
    if (!sst.weights.empty() && sst.weights.size() != channel_pairs.size())
      fail(fmt::format("sst.weights has {} entries for {} channel pairs", sst.weights.size(), channel_pairs.size()));
    if (channel_pairs.empty()) fail("channel_pairs must not be empty");
  }
};

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(Errc::config, (path_.empty() ? "config" : path_) + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }

  void integer(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "out of range");
      out = static_cast<int>(x);
    }
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
        fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  void strings(const char* key, std::vector<std::string>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of strings");
      out.clear();
      for (const auto& s : *v) {
        if (!s.is_string()) fail(key, "expected an array of strings");
        out.push_back(s.get<std::string>());
      }
    }
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      out.clear();
      for (const auto& s : *v) {
        if (!s.is_number()) fail(key, "expected an array of numbers");
        out.push_back(s.get<double>());
      }
    }
  }

  void range(const char* key, double& lo, double& hi) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
        fail(key, "expected [lo, hi]");
      lo = (*v)[0].get<double>();
      hi = (*v)[1].get<double>();
    }
  }

  Reader child(const char* key) {
    const json* v = take(key);
    static const json empty = json::object();
    return Reader(v ? *v : empty, join(path_, key));
  }

  /// Rejects every key nobody asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw Error(Errc::config, join(path_, key) + ": unknown key");
  }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw Error(Errc::config, join(path_, key) + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  RunConfig c;
  detail::Reader root(doc, "");
  root.unsigned_integer("seed", c.seed);
  {
    auto r = root.child("train");
    auto& t = c.train;
    r.number("lr", t.lr);
    r.number("beta1", t.beta1);
    r.number("beta2", t.beta2);
    r.number("eps", t.eps);
    r.integer("batch_size", t.batch_size);
    r.integer("max_epochs", t.max_epochs);
    r.integer("patience_standalone", t.patience_standalone);
    r.integer("patience_loso", t.patience_loso);
    r.number("lr_factor", t.lr_factor);
    r.integer("lr_plateau", t.lr_plateau);
    r.number("inner_val_fraction", t.inner_val_fraction);
    r.finish();
  }
  {
    auto r = root.child("preprocess");
    r.integer("filter_order", c.preprocess.filter_order);
    r.number("low_hz", c.preprocess.low_hz);
    r.number("high_hz", c.preprocess.high_hz);
    r.finish();
  }
  {
    auto r = root.child("artifact");
    r.number("amp_limit_uv", c.preprocess.artifact.amp_limit_uv);
    r.number("flat_run_s", c.preprocess.artifact.flat_run_s);
    r.finish();
  }
  {
    auto r = root.child("synth");
    auto& s = c.synth;
    r.integer("n_subjects", s.n_subjects);
    r.number("duration_min", s.duration_min);
    r.number("fs", s.fs);
    r.range("cycle_min", s.cycle_min_lo, s.cycle_min_hi);
    r.number("qs_fraction", s.qs_fraction);
    r.range("as_rms_uv", s.as_rms_lo, s.as_rms_hi);
    r.range("burst_peak_uv", s.burst_peak_lo, s.burst_peak_hi);
    r.range("burst_s", s.burst_s_lo, s.burst_s_hi);
    r.range("ibi_peak_uv", s.ibi_peak_lo, s.ibi_peak_hi);
    r.range("ibi_s", s.ibi_s_lo, s.ibi_s_hi);
    r.number("artifacts_per_hour", s.artifacts_per_hour);
    r.finish();
  }
  {
    auto r = root.child("sst");
    r.number("threshold", c.sst.threshold);
    r.integer("window", c.sst.window);
    r.numbers("weights", c.sst.weights);
    r.finish();
  }
  if (const auto* pairs = root.take("channel_pairs")) {
    if (!pairs->is_array()) root.fail("channel_pairs", "expected an array of [a, b] pairs");
    c.channel_pairs.clear();
    for (std::size_t i = 0; i < pairs->size(); ++i) {
      const auto& p = (*pairs)[i];
      if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
        throw Error(Errc::config, fmt::format("channel_pairs[{}]: expected [\"A\", \"B\"]", i));
      c.channel_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  }
  root.string("baseline_channel", c.baseline_channel);
  {
    auto r = root.child("paths");
    r.string("data_dir", c.paths.data_dir);
    r.string("out_dir", c.paths.out_dir);
    r.string("recording", c.paths.recording);
    r.string("checkpoint", c.paths.checkpoint);
    r.strings("annotations", c.paths.annotations);
    r.string("sst_csv", c.paths.sst_csv);
    r.finish();
  }
  root.finish();
  c.apply_seed();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config, path + ": " + e.what());
  }
  return parse_run_config(doc);
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& s = c.synth;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& [a, b] : c.channel_pairs) pairs.push_back({a, b});
  return {
      {"seed", c.seed},
      {"train",
       {{"lr", t.lr}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.eps}, {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs}, {"patience_standalone", t.patience_standalone},
        {"patience_loso", t.patience_loso}, {"lr_factor", t.lr_factor}, {"lr_plateau", t.lr_plateau},
        {"inner_val_fraction", t.inner_val_fraction}}},
      {"preprocess",
       {{"filter_order", c.preprocess.filter_order}, {"low_hz", c.preprocess.low_hz}, {"high_hz", c.preprocess.high_hz}}},
      {"artifact",
       {{"amp_limit_uv", c.preprocess.artifact.amp_limit_uv}, {"flat_run_s", c.preprocess.artifact.flat_run_s}}},
      {"synth",
       {{"n_subjects", s.n_subjects}, {"duration_min", s.duration_min}, {"fs", s.fs},
        {"cycle_min", {s.cycle_min_lo, s.cycle_min_hi}}, {"qs_fraction", s.qs_fraction},
        {"as_rms_uv", {s.as_rms_lo, s.as_rms_hi}}, {"burst_peak_uv", {s.burst_peak_lo, s.burst_peak_hi}},
        {"burst_s", {s.burst_s_lo, s.burst_s_hi}}, {"ibi_peak_uv", {s.ibi_peak_lo, s.ibi_peak_hi}},
        {"ibi_s", {s.ibi_s_lo, s.ibi_s_hi}}, {"artifacts_per_hour", s.artifacts_per_hour}}},
      {"sst", {{"threshold", c.sst.threshold}, {"window", c.sst.window}, {"weights", c.sst.weights}}},
      {"channel_pairs", pairs},
      {"baseline_channel", c.baseline_channel},
      {"paths",
       {{"data_dir", c.paths.data_dir}, {"out_dir", c.paths.out_dir}, {"recording", c.paths.recording},
        {"checkpoint", c.paths.checkpoint}, {"annotations", c.paths.annotations}, {"sst_csv", c.paths.sst_csv}}},
  };
}

}  // namespace neosleep::app
