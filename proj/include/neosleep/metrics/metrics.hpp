#pragma once

// Confusion-matrix scores, ROC and correlation. QS is the positive class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neosleep/error.hpp"
#include "neosleep/recording.hpp"

namespace neosleep::metrics {

struct ConfusionMatrix {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct Range {
  double median = 0.0, min = 0.0, max = 0.0;
};

struct MetricReport {
  double accuracy = 0.0;
  std::optional<double> precision;  // absent when nothing was called QS
  std::optional<double> f1;         // absent when there is no QS on either side
  std::optional<double> kappa;      // absent when chance agreement is 1
  std::int64_t n_epochs = 0;
  // filled by summarize() over per-subject reports
  std::optional<Range> accuracy_range, precision_range, f1_range, kappa_range;
};

/// Excluded on either side drops the pair.
inline ConfusionMatrix confusion(std::span<const SleepLabel> pred, std::span<const SleepLabel> truth) {
  if (pred.size() != truth.size())
    throw Error(Errc::length_mismatch, "pred has " + std::to_string(pred.size()) + " labels, truth " +
                                           std::to_string(truth.size()));
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == SleepLabel::Excluded || truth[i] == SleepLabel::Excluded) continue;
    const bool p = pred[i] == SleepLabel::QS, t = truth[i] == SleepLabel::QS;
    if (p && t) ++cm.tp;
    else if (!p && !t) ++cm.tn;
    else if (p) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

inline MetricReport report(const ConfusionMatrix& cm) {
  const std::int64_t n = cm.total();
  if (cm.tp < 0 || cm.tn < 0 || cm.fp < 0 || cm.fn < 0) throw Error(Errc::undefined_metric, "negative count");
  if (n == 0) throw Error(Errc::undefined_metric, "empty confusion matrix");
  MetricReport r;
  r.n_epochs = n;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
  if (cm.tp + cm.fp > 0) r.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (2 * cm.tp + cm.fp + cm.fn > 0)
    r.f1 = static_cast<double>(2 * cm.tp) / static_cast<double>(2 * cm.tp + cm.fp + cm.fn);
  // (Po - Pe) / (1 - Pe) scaled by n^2 so both parts stay integral
  const std::int64_t chance = (cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.fn + cm.tn) * (cm.fp + cm.tn);
  const std::int64_t num = n * (cm.tp + cm.tn) - chance;
  const std::int64_t den = n * n - chance;
  if (den != 0) r.kappa = static_cast<double>(num) / static_cast<double>(den);
  return r;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline std::optional<Range> range_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return Range{median_of(v), *lo, *hi};
}

/// Pooled report over the summed matrices, with the per-subject spread of
/// each score attached.
inline MetricReport summarize(std::span<const ConfusionMatrix> per_subject) {
  ConfusionMatrix pooled;
  std::vector<double> acc, prec, f1, kappa;
  for (const auto& cm : per_subject) {
    pooled += cm;
    if (cm.total() == 0) continue;
    const auto r = report(cm);
    acc.push_back(r.accuracy);
    if (r.precision) prec.push_back(*r.precision);
    if (r.f1) f1.push_back(*r.f1);
    if (r.kappa) kappa.push_back(*r.kappa);
  }
  MetricReport out = report(pooled);
  out.accuracy_range = range_of(acc);
  out.precision_range = range_of(prec);
  out.f1_range = range_of(f1);
  out.kappa_range = range_of(kappa);
  return out;
}

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

/// Threshold sweep over unique scores, highest first. Tied scores move as
/// one step, so the trapezoid area equals the Mann-Whitney statistic with
/// half credit for ties. Pairs with an Excluded truth or a NaN score drop.
inline RocCurve roc_auc(std::span<const double> probs, std::span<const SleepLabel> truth) {
  if (probs.size() != truth.size()) throw Error(Errc::length_mismatch, "scores and labels differ in length");
  std::vector<std::pair<double, bool>> s;
  s.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (truth[i] != SleepLabel::Excluded && !std::isnan(probs[i])) s.emplace_back(probs[i], truth[i] == SleepLabel::QS);
  const auto pos = static_cast<std::int64_t>(std::count_if(s.begin(), s.end(), [](const auto& p) { return p.second; }));
  const auto neg = static_cast<std::int64_t>(s.size()) - pos;
  if (pos == 0 || neg == 0) throw Error(Errc::single_class, "ROC needs both QS and AS in truth");
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < s.size();) {
    const std::int64_t tp0 = tp, fp0 = fp;
    std::size_t j = i;
    for (; j < s.size() && s[j].first == s[i].first; ++j) (s[j].second ? tp : fp) += 1;
    twice_area += (fp - fp0) * (tp + tp0);
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }
  roc.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::length_mismatch, "pearson inputs differ in length");
  if (x.size() < 2) throw Error(Errc::undefined_metric, "pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::zero_variance, "pearson input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace neosleep::metrics
