#pragma once

// Static SVG chart of the sleep state trend: SST line with its channel
// band, threshold, DQS and expert strips, optional aEEG panel.

#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "neosleep/recording.hpp"
#include "neosleep/sst/aeeg.hpp"
#include "neosleep/sst/sst.hpp"

namespace neosleep::sst {

struct SvgInputs {
  SstTrace trace;
  std::vector<QsInterval> dqs;
  std::vector<AnnotationTrack> annotations;  // drawn as QS strips, one per expert
  std::vector<AeegBand> aeeg;                // empty: no aEEG panel
};

namespace svg_detail {

inline constexpr double kPxPerHour = 40.0;
inline constexpr double kHeight = 300.0;
inline constexpr double kLeft = 44.0, kRight = 12.0;

inline std::string num(double v) { return fmt::format("{:.2f}", v); }

// Consecutive non-gap runs as [first, last) epoch indices.
inline std::vector<std::pair<std::size_t, std::size_t>> runs(const SstTrace& tr) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < tr.points.size()) {
    if (tr.points[i].gap()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < tr.points.size() && !tr.points[j].gap()) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

}  // namespace svg_detail

inline std::string render_svg(const SvgInputs& in) {
  using namespace svg_detail;
  const auto& tr = in.trace;
  const double hours = static_cast<double>(tr.points.size()) * tr.epoch_len_s / 3600.0;
  const double plot_w = hours * kPxPerHour;
  const double width = kLeft + plot_w + kRight;
  const bool has_aeeg = !in.aeeg.empty();

  // vertical layout
  const double sst_top = 14, sst_bottom = has_aeeg ? 140 : 200;
  const double strip_h = 8, strip_gap = 4;
  double y = sst_bottom + 10;
  const double dqs_y = y;
  y += strip_h + strip_gap;
  std::vector<double> ann_y;
  for (std::size_t a = 0; a < in.annotations.size(); ++a, y += strip_h + strip_gap) ann_y.push_back(y);
  const double aeeg_top = y + 6, aeeg_bottom = kHeight - 24;
  const double axis_y = kHeight - 24;

  auto x_of_s = [&](double s) { return kLeft + s / 3600.0 * kPxPerHour; };
  auto x_mid = [&](std::size_t e) { return x_of_s((static_cast<double>(e) + 0.5) * tr.epoch_len_s); };
  auto y_sst = [&](double p) { return sst_bottom - p * (sst_bottom - sst_top); };
  auto y_aeeg = [&](double uv) { return aeeg_bottom - aeeg_display_fraction(uv) * (aeeg_bottom - aeeg_top); };

  std::string s;
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
      num(width), num(kHeight), num(width), num(kHeight));
  s += "<style>text{font-family:sans-serif;font-size:9px}</style>\n";
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", num(width), num(kHeight));

  // axes
  s += "<g class=\"axes\" stroke=\"black\" stroke-width=\"0.5\" fill=\"none\">\n";
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>\n", num(kLeft), num(sst_top), num(sst_bottom));
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>\n", num(kLeft), num(axis_y), num(kLeft + plot_w));
  s += "</g>\n";
  s += "<g class=\"labels\" fill=\"black\">\n";
  for (double p : {0.0, 0.5, 1.0})
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(kLeft - 3), num(y_sst(p) + 3),
                     fmt::format("{:g}", p));
  for (int h = 0; h <= static_cast<int>(hours); ++h)
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} h</text>\n", num(x_of_s(h * 3600.0)),
                     num(axis_y + 12), h);
  s += fmt::format("<text x=\"2\" y=\"{}\">SST</text>\n", num(sst_top + 8));
  s += fmt::format("<text x=\"2\" y=\"{}\">DQS</text>\n", num(dqs_y + 7));
  for (std::size_t a = 0; a < in.annotations.size(); ++a)
    s += fmt::format("<text x=\"2\" y=\"{}\">{}</text>\n", num(ann_y[a] + 7), in.annotations[a].expert_id);
  if (has_aeeg) {
    for (double uv : {0.0, 5.0, 10.0, 25.0, 50.0, 100.0})
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:g}</text>\n", num(kLeft - 3),
                       num(y_aeeg(uv) + 3), uv);
    s += fmt::format("<text x=\"2\" y=\"{}\">aEEG</text>\n", num(aeeg_top + 8));
  }
  s += "</g>\n";

  // uncertainty band, skipped when it is degenerate everywhere
  const auto segs = runs(tr);
  bool band = false;
  for (const auto& p : tr.points) band = band || (!p.gap() && p.p_max > p.p_min);
  if (band) {
    for (const auto& [a, b] : segs) {
      std::string pts;
      for (std::size_t e = a; e < b; ++e) pts += fmt::format("{},{} ", num(x_mid(e)), num(y_sst(tr.points[e].p_max)));
      for (std::size_t e = b; e-- > a;) pts += fmt::format("{},{} ", num(x_mid(e)), num(y_sst(tr.points[e].p_min)));
      pts.pop_back();
      s += fmt::format("<polygon class=\"band\" points=\"{}\" fill=\"#c8c8c8\" stroke=\"none\"/>\n", pts);
    }
  }

  s += fmt::format(
      "<line class=\"threshold\" x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\" stroke-width=\"0.6\" "
      "stroke-dasharray=\"2,2\"/>\n",
      num(kLeft), num(y_sst(tr.threshold)), num(kLeft + plot_w));

  for (const auto& [a, b] : segs) {
    std::string d = fmt::format("M{},{}", num(x_mid(a)), num(y_sst(tr.points[a].p_smoothed)));
    for (std::size_t e = a + 1; e < b; ++e) d += fmt::format(" L{},{}", num(x_mid(e)), num(y_sst(tr.points[e].p_smoothed)));
    s += fmt::format("<path class=\"sst\" d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n", d);
  }

  for (const auto& iv : in.dqs)
    s += fmt::format("<rect class=\"dqs\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"black\"/>\n",
                     num(x_of_s(iv.start_epoch * tr.epoch_len_s)), num(dqs_y),
                     num((iv.end_epoch - iv.start_epoch) * tr.epoch_len_s / 3600.0 * kPxPerHour), num(strip_h));
  for (std::size_t a = 0; a < in.annotations.size(); ++a)
    for (const auto& iv : in.annotations[a].qs_intervals)
      s += fmt::format("<rect class=\"expert\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#555555\"/>\n",
                       num(x_of_s(iv.onset_s)), num(ann_y[a]), num(iv.duration_s / 3600.0 * kPxPerHour),
                       num(strip_h));

  if (has_aeeg) {
    std::string pts;
    for (std::size_t e = 0; e < in.aeeg.size(); ++e)
      pts += fmt::format("{},{} ", num(x_mid(e)), num(y_aeeg(in.aeeg[e].upper_uv)));
    for (std::size_t e = in.aeeg.size(); e-- > 0;)
      pts += fmt::format("{},{} ", num(x_mid(e)), num(y_aeeg(in.aeeg[e].lower_uv)));
    pts.pop_back();
    s += fmt::format("<polygon class=\"aeeg\" points=\"{}\" fill=\"#7a7a7a\" stroke=\"black\" stroke-width=\"0.3\"/>\n",
                     pts);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\" stroke-width=\"0.5\"/>\n",
                     num(kLeft), num(aeeg_top), num(aeeg_bottom));
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#999999\" stroke-width=\"0.3\"/>\n", num(kLeft),
        num(y_aeeg(10.0)), num(kLeft + plot_w));
  }
  s += "</svg>\n";
  return s;
}

}  // namespace neosleep::sst
