#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "neosleep/sst/prob_series.hpp"
#include "neosleep/train/trainer.hpp"

namespace neosleep::train {

struct FoldResult {
  std::string held_out_subject;
  sst::ProbSeries predictions;  // every valid epoch of the held-out subject
  TrainResult training;
  std::vector<SampleKey> train_keys, val_keys;
};

/// P(QS) for every valid epoch of a subject, one column per channel in
/// order of first appearance.
inline sst::ProbSeries predict_subject(const nn::ModelParams<float>& model, const SubjectData& subject) {
  sst::ProbSeries out;
  for (const auto& ep : subject.epochs)
    if (std::find(out.channels.begin(), out.channels.end(), ep->channel_label) == out.channels.end())
      out.channels.push_back(ep->channel_label);
  out.p.assign(static_cast<std::size_t>(subject.n_epochs()), std::vector<std::optional<double>>(out.channels.size()));
  std::vector<const dsp::EpochTensor*> valid;
  for (const auto& ep : subject.epochs)
    if (ep->valid) valid.push_back(ep.get());
  const auto probs = nn::predict_qs(model, valid);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    const auto c = static_cast<std::size_t>(
        std::find(out.channels.begin(), out.channels.end(), valid[i]->channel_label) - out.channels.begin());
    out.p[static_cast<std::size_t>(valid[i]->epoch_index)][c] = probs[i];
  }
  return out;
}

struct LosoOptions {
  int jobs = 1;
  std::vector<nn::LayerSpec> architecture = nn::reference_architecture();
  std::function<void(const std::string& subject, const HistoryRow&)> on_epoch;
};

/// Leave-one-subject-out: one fold per subject, in subject-id order. Folds
/// run on up to `opts.jobs` threads; results do not depend on the count.
inline std::vector<FoldResult> loso(std::span<const SubjectData> subjects, const TrainConfig& cfg,
                                    const LosoOptions& opts = {}) {
  cfg.validate();
  if (subjects.size() < 2) throw Error(Errc::too_few_subjects, "cross-validation needs at least two subjects");
  std::vector<const SubjectData*> order;
  std::set<std::string> ids;
  for (const auto& s : subjects) {
    if (!ids.insert(s.subject_id).second) throw Error(Errc::config, "duplicate subject id " + s.subject_id);
    order.push_back(&s);
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->subject_id < b->subject_id; });
  std::vector<LabeledDataset> per_subject;
  for (auto* s : order) per_subject.push_back(build_dataset(*s));

  std::vector<FoldResult> results(order.size());
  auto run_fold = [&](std::size_t k) {
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = nn::derive_seed(cfg.seed, k + 1);
    LabeledDataset pool;
    for (std::size_t j = 0; j < order.size(); ++j)
      if (j != k) pool.append(per_subject[j]);
    const Split split = inner_split(pool, cfg.inner_val_fraction, fold_cfg.seed);

    FoldResult& r = results[k];
    r.held_out_subject = order[k]->subject_id;
    EpochCallback cb;
    if (opts.on_epoch) cb = [&](const HistoryRow& h) { opts.on_epoch(r.held_out_subject, h); };
    r.training = fit(nn::build_model<float>(opts.architecture, nn::derive_seed(fold_cfg.seed, 0x1417)), split.train,
                     split.val, fold_cfg, cfg.patience_loso, cb);
    for (const auto& s : split.train.samples) r.train_keys.push_back(s.key());
    for (const auto& s : split.val.samples) r.val_keys.push_back(s.key());
    r.predictions = predict_subject(r.training.model, *order[k]);
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < order.size();) {
      try {
        run_fold(k);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = order.size();
      }
    }
  };
  const int n_threads = std::clamp(opts.jobs, 1, static_cast<int>(order.size()));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace neosleep::train
