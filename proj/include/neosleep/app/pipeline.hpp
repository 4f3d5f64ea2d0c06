#pragma once

// End-to-end wiring shared by the CLI and the acceptance suite: load a data
// directory, preprocess, cross-validate, post-process and score.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "neosleep/app/run_config.hpp"
#include "neosleep/baseline/envelope.hpp"
#include "neosleep/dsp/preprocess.hpp"
#include "neosleep/edf.hpp"
#include "neosleep/metrics/metrics.hpp"
#include "neosleep/metrics/report_io.hpp"
#include "neosleep/nn/checkpoint.hpp"
#include "neosleep/sst/aeeg.hpp"
#include "neosleep/sst/sst.hpp"
#include "neosleep/sst/svg.hpp"
#include "neosleep/train/loso.hpp"

namespace neosleep::app {

namespace fs = std::filesystem;

inline constexpr const char* kCombinedUnsmoothed = "combined_unsmoothed";

struct LoadedSubject {
  Recording recording;
  std::vector<AnnotationTrack> tracks;
};

/// Annotation files for `<stem>.edf` are `<stem>.csv` (expert E1) and
/// `<stem>.<expert>.csv`.
inline std::vector<AnnotationTrack> find_annotations(const fs::path& edf) {
  std::vector<std::pair<std::string, fs::path>> found;
  const std::string stem = edf.stem().string();
  for (const auto& entry : fs::directory_iterator(edf.parent_path().empty() ? fs::path(".") : edf.parent_path())) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const std::string name = entry.path().stem().string();
    if (name == stem)
      found.emplace_back("E1", entry.path());
    else if (name.size() > stem.size() + 1 && name.compare(0, stem.size() + 1, stem + ".") == 0)
      found.emplace_back(name.substr(stem.size() + 1), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<AnnotationTrack> tracks;
  for (const auto& [expert, path] : found) tracks.push_back(read_annotations(path.string(), expert));
  return tracks;
}

inline LoadedSubject load_subject(const fs::path& edf) {
  LoadedSubject s;
  s.recording = read_edf(edf.string());
  s.recording.subject_id = edf.stem().string();
  s.tracks = find_annotations(edf);
  return s;
}

/// Every `*.edf` in `dir`, in file-name order.
inline std::vector<LoadedSubject> load_subject_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io, "no data directory " + dir.string());
  std::vector<fs::path> edfs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".edf") edfs.push_back(entry.path());
  std::sort(edfs.begin(), edfs.end());
  std::vector<LoadedSubject> out;
  for (const auto& p : edfs) out.push_back(load_subject(p));
  return out;
}

/// Bipolar derivations when the recording carries the referential
/// electrodes; otherwise the channels are taken as already derived.
inline Recording derivations(const Recording& rec, const std::vector<ChannelPair>& pairs) {
  const bool referential = std::all_of(pairs.begin(), pairs.end(), [&](const ChannelPair& p) {
    return rec.has_channel(p.first) && rec.has_channel(p.second);
  });
  return referential ? derive_bipolar(rec, pairs) : rec;
}

inline train::SubjectData prepare_subject(const LoadedSubject& s, const RunConfig& cfg) {
  const Recording rec = derivations(s.recording, cfg.channel_pairs);
  return train::make_subject(s.recording.subject_id, dsp::preprocess_recording(rec, cfg.preprocess), s.tracks);
}

/// Reference labels for scoring: the label all experts agree on, Excluded
/// where they disagree or nobody annotated.
inline std::vector<SleepLabel> consensus_truth(const std::vector<AnnotationTrack>& tracks, int n_epochs) {
  std::vector<SleepLabel> out(static_cast<std::size_t>(n_epochs), SleepLabel::Excluded);
  if (tracks.empty()) return out;
  std::vector<std::vector<EpochLabel>> per;
  for (const auto& t : tracks) per.push_back(epoch_labels(t, n_epochs));
  for (std::size_t e = 0; e < out.size(); ++e) {
    SleepLabel l = per[0][e].label;
    for (const auto& p : per)
      if (p[e].label != l) l = SleepLabel::Excluded;
    out[e] = l;
  }
  return out;
}

inline std::vector<SleepLabel> decisions(const sst::Series& p, double threshold) {
  std::vector<SleepLabel> out;
  for (const auto& v : p) out.push_back(!v ? SleepLabel::Excluded : *v >= threshold ? SleepLabel::QS : SleepLabel::AS);
  return out;
}

/// Scores per channel plus the fused trace before and after smoothing.
struct ScoreSet {
  std::string channel;
  sst::Series scores;
  std::vector<SleepLabel> pred;
};

inline std::vector<ScoreSet> score_sets(const sst::ProbSeries& probs, const sst::SstTrace& trace) {
  std::vector<ScoreSet> out;
  for (std::size_t c = 0; c < probs.n_channels(); ++c) {
    sst::Series col;
    for (const auto& row : probs.p) col.push_back(row[c]);
    out.push_back({probs.channels[c], col, decisions(col, trace.threshold)});
  }
  sst::Series fused, smoothed;
  std::vector<SleepLabel> smoothed_pred;
  for (const auto& pt : trace.points) {
    fused.push_back(pt.gap() ? std::nullopt : std::optional(pt.p_mean));
    smoothed.push_back(pt.gap() ? std::nullopt : std::optional(pt.p_smoothed));
    smoothed_pred.push_back(pt.gap() ? SleepLabel::Excluded
                                     : pt.decision == sst::Decision::QS ? SleepLabel::QS : SleepLabel::AS);
  }
  out.push_back({kCombinedUnsmoothed, fused, decisions(fused, trace.threshold)});
  out.push_back({metrics::kCombined, smoothed, smoothed_pred});
  return out;
}

/// Accumulates per-subject rows and the pooled row for every score set.
class Scoreboard {
 public:
  void add(const std::string& subject, const std::vector<ScoreSet>& sets, const std::vector<SleepLabel>& truth) {
    for (const auto& s : sets) {
      if (std::find(order_.begin(), order_.end(), s.channel) == order_.end()) order_.push_back(s.channel);
      auto& pool = pooled_[s.channel];
      const auto cm = metrics::confusion(s.pred, truth);
      pool.cms.push_back(cm);
      std::vector<double> scores;
      std::vector<SleepLabel> labels;
      for (std::size_t e = 0; e < truth.size(); ++e)
        if (s.scores[e] && truth[e] != SleepLabel::Excluded) {
          scores.push_back(*s.scores[e]);
          labels.push_back(truth[e]);
        }
      pool.scores.insert(pool.scores.end(), scores.begin(), scores.end());
      pool.labels.insert(pool.labels.end(), labels.begin(), labels.end());
      if (cm.total() > 0) rows_.push_back(metrics::make_row(subject, s.channel, cm, auc(scores, labels)));
    }
  }

  std::vector<metrics::ReportRow> rows() const {
    auto out = rows_;
    for (const auto& ch : order_) {
      const auto& pool = pooled_.at(ch);
      metrics::ConfusionMatrix total;
      for (const auto& cm : pool.cms) total += cm;
      if (total.total() == 0) continue;
      metrics::ReportRow r{metrics::kPooled, ch, total, metrics::summarize(pool.cms), auc(pool.scores, pool.labels)};
      out.push_back(std::move(r));
    }
    return out;
  }

 private:
  static std::optional<double> auc(const std::vector<double>& s, const std::vector<SleepLabel>& t) {
    const bool both = std::count(t.begin(), t.end(), SleepLabel::QS) > 0 && std::count(t.begin(), t.end(), SleepLabel::AS) > 0;
    return both ? std::optional(metrics::roc_auc(s, t).auc) : std::nullopt;
  }

  struct Pool {
    std::vector<metrics::ConfusionMatrix> cms;
    std::vector<double> scores;
    std::vector<SleepLabel> labels;
  };
  std::vector<std::string> order_;
  std::map<std::string, Pool> pooled_;
  std::vector<metrics::ReportRow> rows_;
};

inline sst::SstTrace trace_for(const sst::ProbSeries& probs, const RunConfig& cfg) {
  return sst::compute_sst(probs, cfg.sst.weights, cfg.sst.window, cfg.sst.threshold);
}

/// First channel's preprocessed 64 Hz signal, epochs laid end to end.
inline std::vector<double> first_channel_signal(const train::SubjectData& s) {
  std::vector<double> x;
  if (s.epochs.empty()) return x;
  const std::string& label = s.epochs.front()->channel_label;
  for (const auto& ep : s.epochs)
    if (ep->channel_label == label) x.insert(x.end(), ep->samples.begin(), ep->samples.end());
  return x;
}

struct SubjectOutput {
  std::string subject;
  sst::ProbSeries probs;
  sst::SstTrace trace;
  std::vector<sst::QsInterval> dqs;
  std::vector<SleepLabel> truth;
};

inline SubjectOutput postprocess(const train::SubjectData& s, sst::ProbSeries probs, const RunConfig& cfg) {
  SubjectOutput o;
  o.subject = s.subject_id;
  o.trace = trace_for(probs, cfg);
  o.dqs = sst::detect_dqs(o.trace, cfg.sst.threshold);
  o.truth = consensus_truth(s.tracks, static_cast<int>(probs.n_epochs()));
  o.probs = std::move(probs);
  return o;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + p.string());
  out << text;
}

inline void write_subject_outputs(const fs::path& dir, const SubjectOutput& o, const train::SubjectData& s) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "probs.csv");
    sst::write_prob_csv(out, o.probs);
  }
  {
    std::ofstream out(dir / "sst.csv");
    sst::write_sst_csv(out, o.trace);
  }
  {
    std::ofstream out(dir / "dqs.csv");
    sst::write_dqs_csv(out, o.dqs);
  }
  sst::SvgInputs svg{o.trace, o.dqs, s.tracks, {}};
  const auto x = first_channel_signal(s);
  if (x.size() >= dsp::kEpochSamples) svg.aeeg = sst::compute_aeeg(x);
  write_text(dir / "sst.svg", sst::render_svg(svg));
}

inline void write_report(const fs::path& dir, const std::vector<metrics::ReportRow>& rows, const std::string& stem) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / (stem + ".csv"));
    metrics::write_report_csv(out, rows);
  }
  write_text(dir / (stem + ".json"), metrics::report_json(rows).dump(2) + "\n");
}

struct CrossvalResult {
  std::vector<train::FoldResult> folds;
  std::vector<SubjectOutput> outputs;  // same order as folds
  std::vector<metrics::ReportRow> rows;
};

/// LOSO over prepared subjects, then fusion, smoothing and scoring of each
/// held-out subject. Writes nothing.
inline CrossvalResult crossval(const std::vector<train::SubjectData>& subjects, const RunConfig& cfg,
                               const train::LosoOptions& opts = {}) {
  CrossvalResult r;
  r.folds = train::loso(subjects, cfg.train, opts);
  Scoreboard board;
  for (const auto& fold : r.folds) {
    const auto it = std::find_if(subjects.begin(), subjects.end(),
                                 [&](const train::SubjectData& s) { return s.subject_id == fold.held_out_subject; });
    auto out = postprocess(*it, fold.predictions, cfg);
    board.add(out.subject, score_sets(out.probs, out.trace), out.truth);
    r.outputs.push_back(std::move(out));
  }
  r.rows = board.rows();
  return r;
}

inline nlohmann::ordered_json training_metadata(const train::TrainResult& t, const std::string& held_out = {}) {
  nlohmann::ordered_json j;
  if (!held_out.empty()) j["held_out_subject"] = held_out;
  j["best_epoch"] = t.best_epoch;
  j["stop_epoch"] = t.stop_epoch;
  j["best_val_loss"] = t.best_val_loss;
  return j;
}

inline void write_history(const fs::path& p, const std::vector<train::HistoryRow>& h) {
  std::ofstream out(p);
  if (!out) throw Error(Errc::io, "cannot write " + p.string());
  train::write_history_csv(out, h);
}

/// metrics.csv/json at the top, one folder per held-out subject with the
/// fold checkpoint, history and SST artifacts.
inline void write_crossval(const fs::path& out_dir, const CrossvalResult& r,
                           const std::vector<train::SubjectData>& subjects) {
  for (std::size_t k = 0; k < r.folds.size(); ++k) {
    const auto& fold = r.folds[k];
    const fs::path dir = out_dir / "folds" / fold.held_out_subject;
    fs::create_directories(dir);
    nn::save_checkpoint((dir / "model").string(), fold.training.model,
                        training_metadata(fold.training, fold.held_out_subject));
    write_history(dir / "history.csv", fold.training.history);
    const auto it = std::find_if(subjects.begin(), subjects.end(),
                                 [&](const train::SubjectData& s) { return s.subject_id == fold.held_out_subject; });
    write_subject_outputs(dir, r.outputs[k], *it);
  }
  write_report(out_dir, r.rows, "metrics");
}

/// Scores an SST trace read back from disk: the fused trace before and after
/// smoothing against consensus truth.
inline std::vector<metrics::ReportRow> evaluate_trace(const std::string& subject, const sst::SstTrace& trace,
                                                      const std::vector<AnnotationTrack>& tracks) {
  const auto truth = consensus_truth(tracks, static_cast<int>(trace.points.size()));
  auto sets = score_sets(sst::ProbSeries{}, trace);
  Scoreboard board;
  board.add(subject, sets, truth);
  auto rows = board.rows();
  std::erase_if(rows, [](const metrics::ReportRow& r) { return r.subject == metrics::kPooled; });
  return rows;
}

/// One derivation ("P3-P4" or a channel already in the file) filtered and
/// resampled to 64 Hz, epochs laid end to end.
inline std::vector<double> baseline_signal(const Recording& rec, const std::string& channel, const RunConfig& cfg) {
  Recording one;
  if (rec.has_channel(channel)) {
    one = rec;
    one.channels = {rec.channel(channel)};
  } else {
    const auto dash = channel.find('-');
    if (dash == std::string::npos) throw Error(Errc::missing_channel, "no channel '" + channel + "'");
    one = derive_bipolar(rec, {{channel.substr(0, dash), channel.substr(dash + 1)}});
  }
  const auto& ch = one.channels.front();
  std::vector<double> x;
  for (const auto& ep : dsp::preprocess_channel(ch.samples, ch.fs, ch.label, cfg.preprocess))
    x.insert(x.end(), ep.samples.begin(), ep.samples.end());
  return x;
}

inline nlohmann::ordered_json comparison_json(const baseline::Comparison& c) {
  nlohmann::ordered_json j;
  j["n_epochs"] = c.n_epochs;
  j["pearson_env_mean_vs_sst"] = c.pearson_mean;
  j["pearson_env_std_vs_sst"] = c.pearson_std;
  j["roc_auc_env_mean"] = c.roc_mean ? nlohmann::ordered_json(*c.roc_mean) : nlohmann::ordered_json();
  j["roc_auc_env_std"] = c.roc_std ? nlohmann::ordered_json(*c.roc_std) : nlohmann::ordered_json();
  return j;
}

}  // namespace neosleep::app
