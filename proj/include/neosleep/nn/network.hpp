#pragma once

// Batched forward and backward passes for the sequential 1D CNN.
// Activations are laid out [batch][channel][time], contiguous.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "neosleep/dsp/epochs.hpp"
#include "neosleep/nn/model.hpp"

namespace neosleep::nn {

enum class Mode { train, infer };

inline constexpr double kBatchnormEps = 1e-5;
inline constexpr int kClassAS = 0;
inline constexpr int kClassQS = 1;

/// Everything backward() needs from a forward pass. A trace can be passed
/// back into forward_batch_into() to reuse its buffers.
template <class T>
struct ForwardTrace {
  Mode mode = Mode::infer;
  int batch = 0;
  std::vector<Shape> shapes;                 // output shape per layer
  std::vector<std::vector<T>> inputs;        // inputs[i] feeds layer i; inputs[L] is the network output
  std::vector<std::vector<T>> bn_xhat;       // normalized activations (batchnorm)
  std::vector<std::vector<T>> bn_inv_std;    // per channel
  std::vector<std::vector<double>> bn_mean;  // batch statistics (train mode)
  std::vector<std::vector<double>> bn_var;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<T>> dropout_scale;
  std::vector<T> logits;  // [batch][classes]
  std::vector<T> probs;   // [batch][classes]
  int classes = 0;

  T prob(int sample, int cls) const { return probs[static_cast<std::size_t>(sample * classes + cls)]; }
};

template <class T>
struct Gradients {
  std::vector<LayerParams<T>> layers;  // only trainable tensors are filled
};

/// Scratch space for backward_into().
template <class T>
struct BackwardWorkspace {
  std::vector<T> d, din;
};

namespace detail {

template <class T>
void conv1d_forward(const LayerParams<T>& p, const LayerSpec& s, int batch, int length, std::span<const T> in,
                    std::vector<T>& out) {
  const int cin = s.in, cout = s.out, k = s.kernel, pad = s.kernel / 2;
  out.resize(static_cast<std::size_t>(batch) * cout * length);
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < cout; ++o) {
      T* y = out.data() + (static_cast<std::size_t>(n) * cout + o) * length;
      std::fill(y, y + length, p.bias[o]);
      for (int i = 0; i < cin; ++i) {
        const T* x = in.data() + (static_cast<std::size_t>(n) * cin + i) * length;
        const T* w = p.weight.data() + (static_cast<std::size_t>(o) * cin + i) * k;
        for (int j = 0; j < k; ++j) {
          const int shift = j - pad;
          const int t0 = std::max(0, -shift), t1 = std::min(length, length - shift);
          const T wj = w[j];
          const T* xs = x + shift;
#pragma omp simd
          for (int t = t0; t < t1; ++t) y[t] += wj * xs[t];
        }
      }
    }
  }
}

template <class T>
void conv1d_backward(const LayerParams<T>& p, const LayerSpec& s, int batch, int length, std::span<const T> in,
                     std::span<const T> dout, LayerParams<T>& grad, std::vector<T>* din) {
  const int cin = s.in, cout = s.out, k = s.kernel, pad = s.kernel / 2;
  grad.weight.assign(p.weight.size(), T(0));
  grad.bias.assign(p.bias.size(), T(0));
  if (din) din->assign(static_cast<std::size_t>(batch) * cin * length, T(0));
  constexpr int kLanes = 16, kMaxKernel = 64;
  if (k > kMaxKernel) throw Error(Errc::shape_mismatch, "kernel wider than 64 taps");
  const int lo = std::min(pad, length), hi = std::max(lo, length - pad);
  auto tap = [&](const T* dy, const T* x, int u, int j) {
    const int xi = u + j - pad;
    return xi >= 0 && xi < length ? dy[u] * x[xi] : T(0);
  };
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < cout; ++o) {
      const T* dy = dout.data() + (static_cast<std::size_t>(n) * cout + o) * length;
      T db = 0;
#pragma omp simd reduction(+ : db)
      for (int t = 0; t < length; ++t) db += dy[t];
      grad.bias[o] += db;
      for (int i = 0; i < cin; ++i) {
        const T* x = in.data() + (static_cast<std::size_t>(n) * cin + i) * length;
        const T* w = p.weight.data() + (static_cast<std::size_t>(o) * cin + i) * k;
        T* dw = grad.weight.data() + (static_cast<std::size_t>(o) * cin + i) * k;
        T* dx = din ? din->data() + (static_cast<std::size_t>(n) * cin + i) * length : nullptr;
        // dw[j] = sum_t dy[t] * x[t + j - pad]: lane-wise partial sums over
        // the interior, scalar edges.
        T lanes[kMaxKernel][kLanes];
        for (int j = 0; j < k; ++j) std::fill(lanes[j], lanes[j] + kLanes, T(0));
        int t = lo;
        for (; t + kLanes <= hi; t += kLanes)
          for (int j = 0; j < k; ++j) {
            const T* xs = x + t + j - pad;
#pragma omp simd
            for (int q = 0; q < kLanes; ++q) lanes[j][q] += dy[t + q] * xs[q];
          }
        for (int j = 0; j < k; ++j) {
          T acc = 0;
          for (int q = 0; q < kLanes; ++q) acc += lanes[j][q];
          for (int u = 0; u < lo; ++u) acc += tap(dy, x, u, j);
          for (int u = t; u < length; ++u) acc += tap(dy, x, u, j);
          dw[j] += acc;
        }
        if (dx) {
          for (int j = 0; j < k; ++j) {
            const int shift = j - pad;
            const int t0 = std::max(0, -shift), t1 = std::min(length, length - shift);
            const T wj = w[j];
            T* dxs = dx + shift;
#pragma omp simd
            for (int u = t0; u < t1; ++u) dxs[u] += wj * dy[u];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Runs the network on `batch` inputs laid out back to back, reusing the
/// buffers already held by `tr`. In train mode batchnorm uses batch
/// statistics and dropout draws its mask from `dropout_seed`; in infer mode
/// batchnorm uses running statistics and dropout is the identity.
template <class T>
void forward_batch_into(ForwardTrace<T>& tr, const ModelParams<T>& params, std::span<const T> input, int batch,
                        Mode mode, std::uint64_t dropout_seed = 0) {
  const auto& specs = params.specs;
  if (input.size() != params.input.size() * static_cast<std::size_t>(batch))
    throw Error(Errc::shape_mismatch, "input size does not match batch x input shape");
  tr.mode = mode;
  tr.batch = batch;
  tr.shapes = infer_shapes(specs, params.input);
  const std::size_t L = specs.size();
  tr.inputs.resize(L + 1);
  tr.bn_xhat.resize(L);
  tr.bn_inv_std.resize(L);
  tr.bn_mean.resize(L);
  tr.bn_var.resize(L);
  tr.pool_argmax.resize(L);
  tr.dropout_scale.resize(L);
  for (auto& v : tr.dropout_scale) v.clear();
  for (auto& v : tr.bn_mean) v.clear();
  for (auto& v : tr.bn_var) v.clear();

  tr.inputs[0].assign(input.begin(), input.end());
  Shape shape = params.input;
  for (std::size_t li = 0; li < L; ++li) {
    const auto& s = specs[li];
    const auto& p = params.layers[li];
    const std::vector<T>& cur = tr.inputs[li];
    std::vector<T>& next = tr.inputs[li + 1];
    const int C = shape.channels, len = shape.length;
    switch (s.kind) {
      case LayerKind::conv1d:
        detail::conv1d_forward(p, s, batch, len, std::span<const T>(cur), next);
        break;
      case LayerKind::batchnorm: {
        next.resize(cur.size());
        auto& xhat = tr.bn_xhat[li];
        auto& inv_std = tr.bn_inv_std[li];
        xhat.resize(cur.size());
        inv_std.resize(static_cast<std::size_t>(C));
        if (mode == Mode::train) {
          tr.bn_mean[li].assign(static_cast<std::size_t>(C), 0.0);
          tr.bn_var[li].assign(static_cast<std::size_t>(C), 0.0);
        }
        const double count = static_cast<double>(batch) * len;
        for (int c = 0; c < C; ++c) {
          double mean, var;
          if (mode == Mode::train) {
            double sum = 0.0;
            for (int n = 0; n < batch; ++n) {
              const T* x = cur.data() + (static_cast<std::size_t>(n) * C + c) * len;
#pragma omp simd reduction(+ : sum)
              for (int t = 0; t < len; ++t) sum += x[t];
            }
            mean = sum / count;
            double sq = 0.0;
            for (int n = 0; n < batch; ++n) {
              const T* x = cur.data() + (static_cast<std::size_t>(n) * C + c) * len;
#pragma omp simd reduction(+ : sq)
              for (int t = 0; t < len; ++t) {
                const double d = x[t] - mean;
                sq += d * d;
              }
            }
            var = sq / count;
            tr.bn_mean[li][c] = mean;
            tr.bn_var[li][c] = var;
          } else {
            mean = p.running_mean[c];
            var = p.running_var[c];
          }
          const T istd = static_cast<T>(1.0 / std::sqrt(var + kBatchnormEps));
          inv_std[c] = istd;
          const T m = static_cast<T>(mean), g = p.gamma[c], b = p.beta[c];
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * len;
            const T* x = cur.data() + off;
            T* xh = xhat.data() + off;
            T* y = next.data() + off;
#pragma omp simd
            for (int t = 0; t < len; ++t) {
              xh[t] = (x[t] - m) * istd;
              y[t] = g * xh[t] + b;
            }
          }
        }
        break;
      }
      case LayerKind::relu: {
        next.resize(cur.size());
        const T* x = cur.data();
        T* y = next.data();
#pragma omp simd
        for (std::size_t i = 0; i < cur.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        break;
      }
      case LayerKind::maxpool: {
        const int P = s.pool, out_len = len / P;
        next.resize(cur.size() / static_cast<std::size_t>(P));
        auto& arg = tr.pool_argmax[li];
        arg.resize(next.size());
        for (std::size_t row = 0; row < static_cast<std::size_t>(batch) * C; ++row) {
          const T* x = cur.data() + row * len;
          for (int t = 0; t < out_len; ++t) {
            int best = t * P;
            for (int q = t * P + 1; q < (t + 1) * P; ++q)
              if (x[q] > x[best]) best = q;
            next[row * out_len + t] = x[best];
            arg[row * out_len + t] = static_cast<std::uint32_t>(best);
          }
        }
        break;
      }
      case LayerKind::global_avg_pool: {
        next.resize(static_cast<std::size_t>(batch) * C);
        for (std::size_t row = 0; row < next.size(); ++row) {
          T sum = 0;
          const T* x = cur.data() + row * len;
          for (int t = 0; t < len; ++t) sum += x[t];
          next[row] = sum / static_cast<T>(len);
        }
        break;
      }
      case LayerKind::dropout:
        if (mode == Mode::train && s.rate > 0.0) {
          auto& scale = tr.dropout_scale[li];
          scale.resize(cur.size());
          std::uint64_t state = derive_seed(dropout_seed, li);
          const T keep = static_cast<T>(1.0 / (1.0 - s.rate));
          next.resize(cur.size());
          for (std::size_t i = 0; i < cur.size(); ++i) {
            const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
            scale[i] = u < s.rate ? T(0) : keep;
            next[i] = cur[i] * scale[i];
          }
        } else {
          next.assign(cur.begin(), cur.end());
        }
        break;
      case LayerKind::dense: {
        const int F = s.in, O = s.out;
        next.resize(static_cast<std::size_t>(batch) * O);
        for (int n = 0; n < batch; ++n) {
          const T* x = cur.data() + static_cast<std::size_t>(n) * F;
          for (int o = 0; o < O; ++o) {
            const T* w = p.weight.data() + static_cast<std::size_t>(o) * F;
            T acc = p.bias[o];
            for (int f = 0; f < F; ++f) acc += w[f] * x[f];
            next[static_cast<std::size_t>(n) * O + o] = acc;
          }
        }
        break;
      }
      case LayerKind::softmax: {
        const int K = C;
        tr.classes = K;
        tr.logits.assign(cur.begin(), cur.end());
        next.resize(cur.size());
        for (int n = 0; n < batch; ++n) {
          const T* z = cur.data() + static_cast<std::size_t>(n) * K;
          T* y = next.data() + static_cast<std::size_t>(n) * K;
          const T zmax = *std::max_element(z, z + K);
          T sum = 0;
          for (int j = 0; j < K; ++j) sum += (y[j] = std::exp(z[j] - zmax));
          for (int j = 0; j < K; ++j) y[j] /= sum;
        }
        tr.probs.assign(next.begin(), next.end());
        break;
      }
    }
    shape = tr.shapes[li];
  }
}

template <class T>
ForwardTrace<T> forward_batch(const ModelParams<T>& params, std::span<const T> input, int batch, Mode mode,
                              std::uint64_t dropout_seed = 0) {
  ForwardTrace<T> tr;
  forward_batch_into(tr, params, input, batch, mode, dropout_seed);
  return tr;
}

/// Single-epoch forward pass.
template <class T>
ForwardTrace<T> forward(const ModelParams<T>& params, const dsp::EpochTensor& epoch, Mode mode,
                        std::uint64_t dropout_seed = 0) {
  if (!epoch.valid) throw Error(Errc::invalid_epoch, "epoch " + std::to_string(epoch.epoch_index) + " was rejected");
  if (epoch.samples.size() != params.input.size())
    throw Error(Errc::invalid_epoch, "epoch has " + std::to_string(epoch.samples.size()) + " samples");
  const std::vector<T> x(epoch.samples.begin(), epoch.samples.end());
  return forward_batch<T>(params, std::span<const T>(x), 1, mode, dropout_seed);
}

/// Mean softmax cross-entropy over the batch, from the cached logits.
template <class T>
double cross_entropy(const ForwardTrace<T>& tr, std::span<const int> targets) {
  double total = 0.0;
  const int K = tr.classes;
  for (int n = 0; n < tr.batch; ++n) {
    const T* z = tr.logits.data() + static_cast<std::size_t>(n) * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int j = 0; j < K; ++j) sum += std::exp(static_cast<double>(z[j]) - zmax);
    total += zmax + std::log(sum) - static_cast<double>(z[targets[static_cast<std::size_t>(n)]]);
  }
  return total / tr.batch;
}

/// Gradients of the mean cross-entropy with respect to every trainable
/// tensor, written into `g` (buffers reused).
template <class T>
void backward_into(Gradients<T>& g, BackwardWorkspace<T>& ws, const ModelParams<T>& params,
                   const ForwardTrace<T>& tr, std::span<const int> targets) {
  const auto& specs = params.specs;
  if (targets.size() != static_cast<std::size_t>(tr.batch))
    throw Error(Errc::shape_mismatch, "one target per batch sample required");
  const int batch = tr.batch;
  g.layers.resize(specs.size());

  // Softmax + cross-entropy: dL/dz = (p - onehot) / batch.
  auto& d = ws.d;
  auto& din = ws.din;
  d.assign(tr.probs.begin(), tr.probs.end());
  for (int n = 0; n < batch; ++n) d[static_cast<std::size_t>(n * tr.classes + targets[static_cast<std::size_t>(n)])] -= T(1);
  for (auto& v : d) v /= static_cast<T>(batch);

  for (std::size_t li = specs.size() - 1; li-- > 0;) {
    const auto& s = specs[li];
    const auto& p = params.layers[li];
    const auto& x = tr.inputs[li];
    const Shape in_shape = li == 0 ? params.input : tr.shapes[li - 1];
    const int C = in_shape.channels, len = in_shape.length;
    switch (s.kind) {
      case LayerKind::conv1d:
        detail::conv1d_backward(p, s, batch, len, std::span<const T>(x), std::span<const T>(d), g.layers[li],
                                li == 0 ? nullptr : &din);
        break;
      case LayerKind::batchnorm: {
        auto& gl = g.layers[li];
        gl.gamma.assign(static_cast<std::size_t>(C), T(0));
        gl.beta.assign(static_cast<std::size_t>(C), T(0));
        din.resize(x.size());
        const auto& xhat = tr.bn_xhat[li];
        const double count = static_cast<double>(batch) * len;
        for (int c = 0; c < C; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * len;
            const T* dy = d.data() + off;
            const T* xh = xhat.data() + off;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xhat)
            for (int t = 0; t < len; ++t) {
              sum_dy += dy[t];
              sum_dy_xhat += static_cast<double>(dy[t]) * xh[t];
            }
          }
          gl.gamma[c] = static_cast<T>(sum_dy_xhat);
          gl.beta[c] = static_cast<T>(sum_dy);
          const T gamma = p.gamma[c], istd = tr.bn_inv_std[li][c];
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * len;
            const T* dy = d.data() + off;
            const T* xh = xhat.data() + off;
            T* dx = din.data() + off;
            if (tr.mode == Mode::train) {
              const T a = static_cast<T>(gamma * istd / count);
              const T mean_dy = static_cast<T>(sum_dy), mean_dyx = static_cast<T>(sum_dy_xhat);
              const T cnt = static_cast<T>(count);
#pragma omp simd
              for (int t = 0; t < len; ++t) dx[t] = a * (cnt * dy[t] - mean_dy - xh[t] * mean_dyx);
            } else {
              const T a = gamma * istd;
#pragma omp simd
              for (int t = 0; t < len; ++t) dx[t] = dy[t] * a;
            }
          }
        }
        break;
      }
      case LayerKind::relu: {
        din.resize(x.size());
        const T* xi = x.data();
        const T* dy = d.data();
        T* dx = din.data();
#pragma omp simd
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = xi[i] > T(0) ? dy[i] : T(0);
        break;
      }
      case LayerKind::maxpool: {
        din.assign(x.size(), T(0));
        const int out_len = len / s.pool;
        const auto& arg = tr.pool_argmax[li];
        for (std::size_t row = 0; row < static_cast<std::size_t>(batch) * C; ++row)
          for (int t = 0; t < out_len; ++t) din[row * len + arg[row * out_len + t]] += d[row * out_len + t];
        break;
      }
      case LayerKind::global_avg_pool:
        din.resize(x.size());
        for (std::size_t row = 0; row < static_cast<std::size_t>(batch) * C; ++row)
          for (int t = 0; t < len; ++t) din[row * len + t] = d[row] / static_cast<T>(len);
        break;
      case LayerKind::dropout:
        if (!tr.dropout_scale[li].empty()) {
          din.resize(d.size());
          for (std::size_t i = 0; i < d.size(); ++i) din[i] = d[i] * tr.dropout_scale[li][i];
        } else {
          din.assign(d.begin(), d.end());
        }
        break;
      case LayerKind::dense: {
        const int F = s.in, O = s.out;
        auto& gl = g.layers[li];
        gl.weight.assign(p.weight.size(), T(0));
        gl.bias.assign(p.bias.size(), T(0));
        din.assign(static_cast<std::size_t>(batch) * F, T(0));
        for (int n = 0; n < batch; ++n) {
          const T* xin = x.data() + static_cast<std::size_t>(n) * F;
          T* dx = din.data() + static_cast<std::size_t>(n) * F;
          for (int o = 0; o < O; ++o) {
            const T dy = d[static_cast<std::size_t>(n) * O + o];
            gl.bias[o] += dy;
            T* dw = gl.weight.data() + static_cast<std::size_t>(o) * F;
            const T* w = p.weight.data() + static_cast<std::size_t>(o) * F;
            for (int f = 0; f < F; ++f) {
              dw[f] += dy * xin[f];
              dx[f] += dy * w[f];
            }
          }
        }
        break;
      }
      case LayerKind::softmax:
        break;  // folded into the loss gradient above
    }
    std::swap(d, din);
  }
}

template <class T>
Gradients<T> backward(const ModelParams<T>& params, const ForwardTrace<T>& tr, std::span<const int> targets) {
  Gradients<T> g;
  BackwardWorkspace<T> ws;
  backward_into(g, ws, params, tr, targets);
  return g;
}

/// Exponential moving average of batchnorm statistics from a train-mode
/// pass: running = momentum * running + (1 - momentum) * batch.
template <class T>
void update_running_stats(ModelParams<T>& params, const ForwardTrace<T>& tr, double momentum = 0.9) {
  for (std::size_t li = 0; li < params.specs.size(); ++li) {
    if (params.specs[li].kind != LayerKind::batchnorm || tr.bn_mean[li].empty()) continue;
    const Shape in_shape = li == 0 ? params.input : tr.shapes[li - 1];
    const double count = static_cast<double>(tr.batch) * in_shape.length;
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    auto& p = params.layers[li];
    for (std::size_t c = 0; c < p.running_mean.size(); ++c) {
      p.running_mean[c] = static_cast<T>(momentum * p.running_mean[c] + (1.0 - momentum) * tr.bn_mean[li][c]);
      p.running_var[c] = static_cast<T>(momentum * p.running_var[c] + (1.0 - momentum) * tr.bn_var[li][c] * unbias);
    }
  }
}

/// P(QS) for each epoch, evaluated in inference mode in chunks.
inline std::vector<double> predict_qs(const ModelParams<float>& params, std::span<const dsp::EpochTensor* const> epochs,
                                      int chunk = 64) {
  std::vector<double> out;
  out.reserve(epochs.size());
  std::vector<float> buf;
  ForwardTrace<float> tr;
  for (std::size_t start = 0; start < epochs.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(epochs.size(), start + static_cast<std::size_t>(chunk));
    buf.clear();
    for (std::size_t i = start; i < end; ++i) {
      const auto* ep = epochs[i];
      if (!ep->valid || ep->samples.size() != params.input.size())
        throw Error(Errc::invalid_epoch, "epoch " + std::to_string(ep->epoch_index) + " cannot be classified");
      buf.insert(buf.end(), ep->samples.begin(), ep->samples.end());
    }
    forward_batch_into<float>(tr, params, std::span<const float>(buf), static_cast<int>(end - start), Mode::infer);
    for (int n = 0; n < tr.batch; ++n) out.push_back(tr.prob(n, kClassQS));
  }
  return out;
}

}  // namespace neosleep::nn
