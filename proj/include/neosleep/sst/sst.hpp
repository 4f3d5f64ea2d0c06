#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "neosleep/error.hpp"
#include "neosleep/recording.hpp"
#include "neosleep/sst/prob_series.hpp"

namespace neosleep::sst {

enum class Decision { AS, QS, Gap };

constexpr std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::AS: return "AS";
    case Decision::QS: return "QS";
    case Decision::Gap: return "Gap";
  }
  return "?";
}

struct SstPoint {
  int epoch_index = 0;
  double p_mean = 0.0, p_min = 0.0, p_max = 0.0, p_smoothed = 0.0;  // unset for Gap
  Decision decision = Decision::Gap;

  bool gap() const { return decision == Decision::Gap; }
};

struct SstTrace {
  std::vector<SstPoint> points;
  double threshold = 0.5;
  double epoch_len_s = kEpochSeconds;
};

/// Half-open epoch range [start_epoch, end_epoch).
struct QsInterval {
  int start_epoch = 0;
  int end_epoch = 0;
  bool operator==(const QsInterval&) const = default;
};

using Series = std::vector<std::optional<double>>;

/// Weighted mean over the channels present in each epoch; weights are
/// renormalized per epoch. Empty `weights` means uniform.
inline Series fuse_channels(const ProbSeries& probs, std::span<const double> weights = {}) {
  probs.validate();
  if (!weights.empty() && weights.size() != probs.n_channels())
    throw Error(Errc::config, "one weight per channel required");
  for (double w : weights)
    if (!(w >= 0.0)) throw Error(Errc::config, "channel weights must be non-negative");
  Series out(probs.n_epochs());
  for (std::size_t e = 0; e < probs.n_epochs(); ++e) {
    double num = 0.0, den = 0.0;
    bool any = false;
    for (std::size_t c = 0; c < probs.n_channels(); ++c) {
      if (!probs.p[e][c]) continue;
      const double w = weights.empty() ? 1.0 : weights[c];
      num += w * *probs.p[e][c];
      den += w;
      any = true;
    }
    if (!any) continue;
    if (den <= 0.0) throw Error(Errc::config, fmt::format("epoch {}: present channels all have zero weight", e));
    out[e] = num / den;
  }
  return out;
}

/// Centered moving median. The window shrinks symmetrically at the ends;
/// gaps are skipped inside windows and stay gaps in the output.
inline Series median_smooth(const Series& x, int window = 5) {
  if (window < 1 || window % 2 == 0) throw Error(Errc::even_window, fmt::format("window {} is not odd", window));
  const int n = static_cast<int>(x.size()), half = window / 2;
  Series out(x.size());
  std::vector<double> buf;
  for (int i = 0; i < n; ++i) {
    if (!x[static_cast<std::size_t>(i)]) continue;
    const int h = std::min({half, i, n - 1 - i});
    buf.clear();
    for (int j = i - h; j <= i + h; ++j)
      if (x[static_cast<std::size_t>(j)]) buf.push_back(*x[static_cast<std::size_t>(j)]);
    std::sort(buf.begin(), buf.end());
    const std::size_t m = buf.size();
    out[static_cast<std::size_t>(i)] = m % 2 ? buf[m / 2] : 0.5 * (buf[m / 2 - 1] + buf[m / 2]);
  }
  return out;
}

inline SstTrace compute_sst(const ProbSeries& probs, std::span<const double> weights = {}, int window = 5,
                            double threshold = 0.5) {
  const Series fused = fuse_channels(probs, weights);
  const Series smoothed = median_smooth(fused, window);
  SstTrace tr;
  tr.threshold = threshold;
  for (std::size_t e = 0; e < probs.n_epochs(); ++e) {
    SstPoint pt;
    pt.epoch_index = static_cast<int>(e);
    if (fused[e]) {
      pt.p_mean = *fused[e];
      pt.p_min = 1.0;
      pt.p_max = 0.0;
      for (const auto& v : probs.p[e])
        if (v) {
          pt.p_min = std::min(pt.p_min, *v);
          pt.p_max = std::max(pt.p_max, *v);
        }
      // weighted means can land a rounding step outside [min, max]
      pt.p_mean = std::clamp(pt.p_mean, pt.p_min, pt.p_max);
      pt.p_smoothed = *smoothed[e];
      pt.decision = pt.p_smoothed >= threshold ? Decision::QS : Decision::AS;
    }
    tr.points.push_back(pt);
  }
  return tr;
}

/// Maximal runs of epochs whose smoothed probability reaches `threshold`;
/// gaps end a run.
inline std::vector<QsInterval> detect_dqs(const SstTrace& trace, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(Errc::config, "DQS threshold must lie in (0, 1)");
  std::vector<QsInterval> out;
  std::optional<int> start;
  const int n = static_cast<int>(trace.points.size());
  for (int e = 0; e <= n; ++e) {
    const bool qs = e < n && !trace.points[static_cast<std::size_t>(e)].gap() &&
                    trace.points[static_cast<std::size_t>(e)].p_smoothed >= threshold;
    if (qs && !start) start = e;
    if (!qs && start) {
      out.push_back({*start, e});
      start.reset();
    }
  }
  return out;
}

inline void write_sst_csv(std::ostream& out, const SstTrace& tr) {
  out << "epoch_index,t_start_s,p_mean,p_min,p_max,p_smoothed,decision\n";
  for (const auto& p : tr.points) {
    const double t = p.epoch_index * tr.epoch_len_s;
    if (p.gap())
      out << fmt::format("{},{},,,,,Gap\n", p.epoch_index, t);
    else
      out << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", p.epoch_index, t, p.p_mean, p.p_min, p.p_max,
                         p.p_smoothed, to_string(p.decision));
  }
}

inline SstTrace read_sst_csv(std::istream& in, double threshold = 0.5) {
  SstTrace tr;
  tr.threshold = threshold;
  std::string line;
  if (!std::getline(in, line) || neosleep::detail::trim(line) != "epoch_index,t_start_s,p_mean,p_min,p_max,p_smoothed,decision")
    throw Error(Errc::malformed_header, "not an SST CSV");
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (neosleep::detail::trim(line).empty()) continue;
    const auto f = neosleep::detail::split_csv_line(line);
    if (f.size() != 7) throw Error(Errc::malformed_header, fmt::format("SST CSV row {}: expected 7 fields", row));
    SstPoint p;
    p.epoch_index = static_cast<int>(neosleep::detail::parse_double(f[0], Errc::malformed_header, "epoch_index"));
    if (f[6] == "Gap") {
      p.decision = Decision::Gap;
    } else {
      p.p_mean = neosleep::detail::parse_double(f[2], Errc::malformed_header, "p_mean");
      p.p_min = neosleep::detail::parse_double(f[3], Errc::malformed_header, "p_min");
      p.p_max = neosleep::detail::parse_double(f[4], Errc::malformed_header, "p_max");
      p.p_smoothed = neosleep::detail::parse_double(f[5], Errc::malformed_header, "p_smoothed");
      if (f[6] == "QS")
        p.decision = Decision::QS;
      else if (f[6] == "AS")
        p.decision = Decision::AS;
      else
        throw Error(Errc::malformed_header, fmt::format("SST CSV row {}: unknown decision '{}'", row, f[6]));
    }
    tr.points.push_back(p);
  }
  return tr;
}

inline void write_dqs_csv(std::ostream& out, const std::vector<QsInterval>& dqs, double epoch_len_s = kEpochSeconds) {
  out << "start_s,end_s\n";
  for (const auto& iv : dqs) out << fmt::format("{},{}\n", iv.start_epoch * epoch_len_s, iv.end_epoch * epoch_len_s);
}

inline void write_prob_csv(std::ostream& out, const ProbSeries& probs) {
  out << "epoch_index";
  for (const auto& c : probs.channels) out << ',' << c;
  out << '\n';
  for (std::size_t e = 0; e < probs.n_epochs(); ++e) {
    out << e;
    for (const auto& v : probs.p[e]) {
      out << ',';
      if (v) out << fmt::format("{:.6f}", *v);
    }
    out << '\n';
  }
}

inline ProbSeries read_prob_csv(std::istream& in) {
  ProbSeries probs;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::malformed_header, "empty probability CSV");
  auto head = neosleep::detail::split_csv_line(line);
  if (head.empty() || head[0] != "epoch_index") throw Error(Errc::malformed_header, "not a probability CSV");
  probs.channels.assign(head.begin() + 1, head.end());
  while (std::getline(in, line)) {
    if (neosleep::detail::trim(line).empty()) continue;
    const auto f = neosleep::detail::split_csv_line(line);
    if (f.size() != head.size()) throw Error(Errc::malformed_header, "probability CSV row has the wrong field count");
    const auto e = static_cast<std::size_t>(neosleep::detail::parse_double(f[0], Errc::malformed_header, "epoch_index"));
    if (e != probs.p.size()) throw Error(Errc::malformed_header, "probability CSV epochs must be consecutive from 0");
    auto& row = probs.p.emplace_back(probs.channels.size());
    for (std::size_t c = 0; c < probs.channels.size(); ++c)
      if (!f[c + 1].empty()) row[c] = neosleep::detail::parse_double(f[c + 1], Errc::malformed_header, probs.channels[c]);
  }
  probs.validate();
  return probs;
}

}  // namespace neosleep::sst
