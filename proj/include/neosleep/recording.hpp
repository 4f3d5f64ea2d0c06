#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "neosleep/error.hpp"

namespace neosleep {

inline constexpr double kEpochSeconds = 60.0;

struct ChannelSignal {
  std::string label;
  double fs = 0.0;  // samples per second
  std::vector<double> samples;  // microvolts
};

/// A loaded EEG recording. Channels may carry different sampling rates
/// straight out of a file; the preprocessing chain brings them to 64 Hz.
struct Recording {
  std::string subject_id;
  double duration_s = 0.0;
  std::vector<ChannelSignal> channels;

  const ChannelSignal& channel(std::string_view label) const {
    for (const auto& ch : channels)
      if (ch.label == label) return ch;
    throw Error(Errc::missing_channel, "no channel '" + std::string(label) + "' in " + subject_id);
  }

  bool has_channel(std::string_view label) const {
    return std::any_of(channels.begin(), channels.end(),
                       [&](const ChannelSignal& ch) { return ch.label == label; });
  }

  /// Common sampling rate; throws if channels disagree.
  double fs() const {
    if (channels.empty()) return 0.0;
    const double rate = channels.front().fs;
    for (const auto& ch : channels)
      if (ch.fs != rate) throw Error(Errc::mixed_sampling_rates, subject_id + " mixes sampling rates");
    return rate;
  }
};

struct TimeInterval {
  double onset_s = 0.0;
  double duration_s = 0.0;
  double end_s() const { return onset_s + duration_s; }
};

struct AnnotationTrack {
  std::string expert_id;
  std::vector<TimeInterval> qs_intervals;  // sorted, non-overlapping
  double resolution_s = 1.0;
};

enum class SleepLabel { QS, AS, Excluded };

constexpr std::string_view to_string(SleepLabel label) {
  switch (label) {
    case SleepLabel::QS: return "QS";
    case SleepLabel::AS: return "AS";
    case SleepLabel::Excluded: return "Excluded";
  }
  return "?";
}

struct EpochLabel {
  int epoch_index = 0;
  SleepLabel label = SleepLabel::AS;
};

using ChannelPair = std::pair<std::string, std::string>;

inline std::vector<ChannelPair> default_bipolar_pairs() {
  return {{"F3", "P3"}, {"F4", "P4"}, {"F3", "F4"}, {"P3", "P4"}};
}

/// Returns a recording holding only the requested "A-B" derivations, in the
/// order given.
inline Recording derive_bipolar(const Recording& rec, const std::vector<ChannelPair>& pairs) {
  Recording out;
  out.subject_id = rec.subject_id;
  out.duration_s = rec.duration_s;
  for (const auto& [a_label, b_label] : pairs) {
    const ChannelSignal& a = rec.channel(a_label);
    const ChannelSignal& b = rec.channel(b_label);
    if (a.fs != b.fs || a.samples.size() != b.samples.size())
      throw Error(Errc::mixed_sampling_rates, a_label + " and " + b_label + " differ in rate or length");
    ChannelSignal d;
    d.label = a_label + "-" + b_label;
    d.fs = a.fs;
    d.samples.resize(a.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i] = a.samples[i] - b.samples[i];
    out.channels.push_back(std::move(d));
  }
  return out;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double parse_double(const std::string& text, Errc code, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(code, context + ": not a number '" + text + "'");
  }
}

}  // namespace detail

/// Sorts QS intervals by onset and checks they are non-negative and disjoint.
inline void normalize_intervals(std::vector<TimeInterval>& intervals) {
  std::sort(intervals.begin(), intervals.end(),
            [](const TimeInterval& a, const TimeInterval& b) { return a.onset_s < b.onset_s; });
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i].duration_s < 0.0)
      throw Error(Errc::negative_duration, "interval at " + std::to_string(intervals[i].onset_s) + " s");
    if (i > 0 && intervals[i].onset_s < intervals[i - 1].end_s())
      throw Error(Errc::overlap, "QS interval at " + std::to_string(intervals[i].onset_s) +
                                     " s overlaps the previous one");
  }
}

/// Parses the `onset_s,duration_s,label` sidecar. Only rows labelled QS
/// are kept; anything else is active sleep by omission.
inline AnnotationTrack parse_annotations(std::istream& in, std::string expert_id = {}) {
  AnnotationTrack track;
  track.expert_id = std::move(expert_id);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
      line.erase(0, 3);  // UTF-8 BOM
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("onset_s", 0) == 0) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < 3)
      throw Error(Errc::malformed_header, "annotation line " + std::to_string(line_no) + " has " +
                                              std::to_string(fields.size()) + " fields");
    const std::string ctx = "annotation line " + std::to_string(line_no);
    const double onset = detail::parse_double(fields[0], Errc::malformed_header, ctx);
    const double duration = detail::parse_double(fields[1], Errc::malformed_header, ctx);
    if (duration < 0.0) throw Error(Errc::negative_duration, ctx);
    if (fields[2] == "QS") track.qs_intervals.push_back({onset, duration});
  }
  normalize_intervals(track.qs_intervals);
  return track;
}

inline AnnotationTrack read_annotations(const std::string& path, std::string expert_id = {}) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return parse_annotations(in, std::move(expert_id));
}

inline void write_annotations(std::ostream& out, const AnnotationTrack& track) {
  out << "onset_s,duration_s,label\n";
  for (const auto& iv : track.qs_intervals) out << iv.onset_s << ',' << iv.duration_s << ",QS\n";
}

inline void write_annotations(const std::string& path, const AnnotationTrack& track) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  write_annotations(out, track);
}

/// An epoch is QS when the union of QS intervals covers it completely, AS
/// when it touches none of them, and Excluded when it straddles a boundary.
inline std::vector<EpochLabel> epoch_labels(const AnnotationTrack& track, int n_epochs,
                                            double epoch_len_s = kEpochSeconds) {
  auto intervals = track.qs_intervals;
  std::sort(intervals.begin(), intervals.end(),
            [](const TimeInterval& a, const TimeInterval& b) { return a.onset_s < b.onset_s; });
  constexpr double kTol = 1e-9;
  std::vector<EpochLabel> labels;
  labels.reserve(static_cast<std::size_t>(std::max(n_epochs, 0)));
  for (int e = 0; e < n_epochs; ++e) {
    const double lo = e * epoch_len_s;
    const double hi = lo + epoch_len_s;
    double covered = 0.0;
    for (const auto& iv : intervals) {
      const double a = std::max(lo, iv.onset_s);
      const double b = std::min(hi, iv.end_s());
      if (b > a) covered += b - a;
    }
    SleepLabel label = SleepLabel::Excluded;
    if (covered >= epoch_len_s - kTol)
      label = SleepLabel::QS;
    else if (covered <= kTol)
      label = SleepLabel::AS;
    labels.push_back({e, label});
  }
  return labels;
}

}  // namespace neosleep
