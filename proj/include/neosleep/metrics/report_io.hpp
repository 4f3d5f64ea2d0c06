#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "neosleep/metrics/metrics.hpp"

namespace neosleep::metrics {

inline constexpr const char* kPooled = "pooled";
inline constexpr const char* kCombined = "combined";

/// One line of the evaluation table. subject is kPooled for the row that
/// sums all subjects; channel is kCombined for the fused trace.
struct ReportRow {
  std::string subject;
  std::string channel;
  ConfusionMatrix cm;
  MetricReport report;
  std::optional<double> auc;
};

inline ReportRow make_row(std::string subject, std::string channel, const ConfusionMatrix& cm,
                          std::optional<double> auc = std::nullopt) {
  return {std::move(subject), std::move(channel), cm, report(cm), auc};
}

namespace detail {

inline std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); }

inline nlohmann::json value(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json value(const std::optional<Range>& r) {
  if (!r) return nullptr;
  return {{"median", r->median}, {"min", r->min}, {"max", r->max}};
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "subject,channel,n_epochs,tp,tn,fp,fn,accuracy,precision,f1,kappa,auc\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{:.6f},{},{},{},{}\n", r.subject, r.channel, r.report.n_epochs, r.cm.tp,
                       r.cm.tn, r.cm.fp, r.cm.fn, r.report.accuracy, detail::cell(r.report.precision),
                       detail::cell(r.report.f1), detail::cell(r.report.kappa), detail::cell(r.auc));
}

inline nlohmann::json report_json(const std::vector<ReportRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {
        {"subject", r.subject},
        {"channel", r.channel},
        {"n_epochs", r.report.n_epochs},
        {"confusion", {{"tp", r.cm.tp}, {"tn", r.cm.tn}, {"fp", r.cm.fp}, {"fn", r.cm.fn}}},
        {"accuracy", r.report.accuracy},
        {"precision", detail::value(r.report.precision)},
        {"f1", detail::value(r.report.f1)},
        {"kappa", detail::value(r.report.kappa)},
        {"auc", detail::value(r.auc)},
    };
    if (r.report.accuracy_range)
      j["per_subject"] = {{"accuracy", detail::value(r.report.accuracy_range)},
                          {"precision", detail::value(r.report.precision_range)},
                          {"f1", detail::value(r.report.f1_range)},
                          {"kappa", detail::value(r.report.kappa_range)}};
    arr.push_back(std::move(j));
  }
  return {{"rows", arr}};
}

}  // namespace neosleep::metrics
