#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "neosleep/nn/network.hpp"
#include "neosleep/train/config.hpp"

namespace neosleep::train {

template <class T>
struct AdamState {
  std::vector<T> m, v;
  long t = 0;
};

/// One ADAM update of `param` in place; advances state.t.
template <class T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState<T>& state, const TrainConfig& cfg,
               double lr) {
  if (param.size() != grad.size()) throw Error(Errc::shape_mismatch, "adam: gradient size differs from parameter size");
  if (state.m.empty()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  if (state.m.size() != param.size()) throw Error(Errc::shape_mismatch, "adam: state size differs from parameter size");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
  }
}

/// ADAM over every trainable tensor of a model.
template <class T>
class Adam {
 public:
  void step(nn::ModelParams<T>& model, const nn::Gradients<T>& grads, const TrainConfig& cfg, double lr) {
    std::vector<std::vector<T>*> params;
    std::vector<const std::vector<T>*> gs;
    for (auto& l : model.layers) l.for_each_trainable([&](std::vector<T>& v) { params.push_back(&v); });
    for (const auto& l : grads.layers) l.for_each_trainable([&](const std::vector<T>& v) { gs.push_back(&v); });
    if (params.size() != gs.size()) throw Error(Errc::shape_mismatch, "adam: gradient layout differs from model");
    states_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      adam_step<T>(std::span<T>(*params[i]), std::span<const T>(*gs[i]), states_[i], cfg, lr);
  }

 private:
  std::vector<AdamState<T>> states_;
};

/// Early stopping and learning-rate reduction driven by validation loss.
/// Epochs are numbered from 0; the first recorded loss is always an
/// improvement.
class TrainingSchedule {
 public:
  TrainingSchedule(double lr, double lr_factor, int lr_plateau, int patience, int max_epochs)
      : lr_(lr), factor_(lr_factor), plateau_(lr_plateau), patience_(patience), max_epochs_(max_epochs) {}

  explicit TrainingSchedule(const TrainConfig& cfg, int patience)
      : TrainingSchedule(cfg.lr, cfg.lr_factor, cfg.lr_plateau, patience, cfg.max_epochs) {}

  /// Returns true when `val_loss` is a new best.
  bool record(double val_loss) {
    const int epoch = ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch;
      wait_ = 0;
      return true;
    }
    if (++wait_ >= plateau_) {
      lr_ *= factor_;
      wait_ = 0;
    }
    return false;
  }

  bool should_stop() const {
    return epoch_ >= 0 && (epoch_ - best_epoch_ >= patience_ || epoch_ + 1 >= max_epochs_);
  }

  double lr() const { return lr_; }
  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  double lr_, factor_;
  int plateau_, patience_, max_epochs_;
  int epoch_ = -1, best_epoch_ = -1, wait_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

}  // namespace neosleep::train
