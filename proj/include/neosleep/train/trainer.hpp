#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "neosleep/nn/model.hpp"
#include "neosleep/nn/network.hpp"
#include "neosleep/train/config.hpp"
#include "neosleep/train/dataset.hpp"
#include "neosleep/train/optimizer.hpp"

namespace neosleep::train {

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during this epoch
};

struct TrainResult {
  nn::ModelParams<float> model;  // best validation loss
  std::vector<HistoryRow> history;
  int best_epoch = -1;
  int stop_epoch = -1;
  double best_val_loss = 0.0;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

inline void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& h : history) out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", h.epoch, h.train_loss, h.val_loss, h.lr);
}

namespace detail {

inline void gather(const LabeledDataset& d, std::span<const std::size_t> idx, std::vector<float>& x,
                   std::vector<int>& y) {
  x.clear();
  y.clear();
  for (auto i : idx) {
    const auto& s = d.samples[i];
    x.insert(x.end(), s.epoch->samples.begin(), s.epoch->samples.end());
    y.push_back(s.label);
  }
}

inline void check_inputs(const LabeledDataset& d, const nn::ModelParams<float>& m, const char* which) {
  for (const auto& s : d.samples)
    if (!s.epoch->valid || s.epoch->samples.size() != m.input.size())
      throw Error(Errc::invalid_epoch, fmt::format("{} set holds an epoch the model cannot take", which));
}

}  // namespace detail

/// Mean cross-entropy of the model over a dataset, inference mode.
inline double evaluate_loss(const nn::ModelParams<float>& m, const LabeledDataset& d, int chunk = 64) {
  if (d.empty()) return 0.0;
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<float> x;
  std::vector<int> y;
  double total = 0.0;
  nn::ForwardTrace<float> tr;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(chunk));
    detail::gather(d, std::span(idx).subspan(start, end - start), x, y);
    nn::forward_batch_into<float>(tr, m, std::span<const float>(x), static_cast<int>(end - start), nn::Mode::infer);
    total += nn::cross_entropy(tr, y) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(d.size());
}

/// Trains `init` on `train_set`, early-stopping on `val_set`.
inline TrainResult fit(nn::ModelParams<float> init, const LabeledDataset& train_set, const LabeledDataset& val_set,
                       const TrainConfig& cfg, int patience, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.count(nn::kClassQS) == 0 || train_set.count(nn::kClassAS) == 0)
    throw Error(Errc::single_class_dataset, "training set must contain both QS and AS samples");
  if (val_set.empty()) throw Error(Errc::config, "validation set is empty");
  detail::check_inputs(train_set, init, "training");
  detail::check_inputs(val_set, init, "validation");

  TrainResult result;
  nn::ModelParams<float> model = std::move(init);
  result.model = model;
  Adam<float> adam;
  TrainingSchedule schedule(cfg, patience);
  std::mt19937_64 rng(nn::derive_seed(cfg.seed, 0x5EED));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> x;
  std::vector<int> y;
  nn::ForwardTrace<float> tr;
  nn::Gradients<float> g;
  nn::BackwardWorkspace<float> ws;

  while (!schedule.should_stop()) {
    const int epoch = schedule.epoch() + 1;
    const double lr = schedule.lr();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::uint64_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int b = static_cast<int>(end - start);
      detail::gather(train_set, std::span(order).subspan(start, end - start), x, y);
      const std::uint64_t dropout_seed = nn::derive_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 24) + batch_no);
      nn::forward_batch_into<float>(tr, model, std::span<const float>(x), b, nn::Mode::train, dropout_seed);
      loss_sum += nn::cross_entropy(tr, y) * b;
      nn::backward_into<float>(g, ws, model, tr, y);
      adam.step(model, g, cfg, lr);
      nn::update_running_stats(model, tr);
    }
    if (!model.all_finite()) throw Error(Errc::diverged, fmt::format("non-finite parameters at epoch {}", epoch));

    HistoryRow row{epoch, loss_sum / static_cast<double>(train_set.size()), evaluate_loss(model, val_set), lr};
    result.history.push_back(row);
    if (schedule.record(row.val_loss)) result.model = model;
    if (on_epoch) on_epoch(row);
  }
  result.best_epoch = schedule.best_epoch();
  result.best_val_loss = schedule.best_loss();
  result.stop_epoch = schedule.epoch();
  return result;
}

/// Standalone training: inner split of `dataset`, reference architecture.
inline TrainResult train(const LabeledDataset& dataset, const TrainConfig& cfg, int patience,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (dataset.count(nn::kClassQS) == 0 || dataset.count(nn::kClassAS) == 0)
    throw Error(Errc::single_class_dataset, "dataset must contain both QS and AS samples");
  const Split split = inner_split(dataset, cfg.inner_val_fraction, cfg.seed);
  return fit(nn::build_model<float>(nn::reference_architecture(), nn::derive_seed(cfg.seed, 0x1417)), split.train,
             split.val, cfg, patience, on_epoch);
}

}  // namespace neosleep::train
