#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "neosleep/error.hpp"
#include "neosleep/seed.hpp"

namespace neosleep::nn {

enum class LayerKind { conv1d, batchnorm, relu, maxpool, global_avg_pool, dropout, dense, softmax };

constexpr std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dropout: return "dropout";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::conv1d, LayerKind::batchnorm, LayerKind::relu, LayerKind::maxpool,
                 LayerKind::global_avg_pool, LayerKind::dropout, LayerKind::dense, LayerKind::softmax})
    if (to_string(k) == name) return k;
  throw Error(Errc::shape_mismatch, "unknown layer kind '" + std::string(name) + "'");
}

/// One layer of the sequential network. Only the fields relevant to `kind`
/// are meaningful: conv1d uses in/out/kernel, batchnorm uses in (channels),
/// maxpool uses pool, dropout uses rate, dense uses in/out.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in = 0;
  int out = 0;
  int kernel = 0;
  int pool = 0;
  double rate = 0.0;

  static LayerSpec conv1d(int in, int out, int kernel) { return {LayerKind::conv1d, in, out, kernel, 0, 0.0}; }
  static LayerSpec batchnorm(int channels) { return {LayerKind::batchnorm, channels, channels, 0, 0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0, 0.0}; }
  static LayerSpec maxpool(int pool) { return {LayerKind::maxpool, 0, 0, 0, pool, 0.0}; }
  static LayerSpec global_avg_pool() { return {LayerKind::global_avg_pool, 0, 0, 0, 0, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, 0, 0, 0, rate}; }
  static LayerSpec dense(int in, int out) { return {LayerKind::dense, in, out, 0, 0, 0.0}; }
  static LayerSpec softmax() { return {LayerKind::softmax, 0, 0, 0, 0, 0.0}; }

  bool operator==(const LayerSpec&) const = default;
};

struct Shape {
  int channels = 1;
  int length = 3840;
  std::size_t size() const { return static_cast<std::size_t>(channels) * static_cast<std::size_t>(length); }
  bool operator==(const Shape&) const = default;
};

inline constexpr Shape kEpochInput{1, 3840};

/// Sleep-state network: three conv/batchnorm/ReLU stages with two 4x pools
/// (8 feature layers), then global average pooling, dropout and a 2-way
/// dense + softmax head (3 classification layers). ReLU rides along with
/// its batchnorm and is not counted as a layer of its own.
inline std::vector<LayerSpec> reference_architecture() {
  return {
      LayerSpec::conv1d(1, 8, 3),   LayerSpec::batchnorm(8),  LayerSpec::relu(), LayerSpec::maxpool(4),
      LayerSpec::conv1d(8, 16, 11), LayerSpec::batchnorm(16), LayerSpec::relu(), LayerSpec::maxpool(4),
      LayerSpec::conv1d(16, 24, 9), LayerSpec::batchnorm(24), LayerSpec::relu(),
      LayerSpec::global_avg_pool(), LayerSpec::dropout(0.2),  LayerSpec::dense(24, 2), LayerSpec::softmax(),
  };
}

/// Trainable parameters per layer kind; batchnorm running statistics are
/// state, not parameters.
inline std::size_t layer_param_count(const LayerSpec& s) {
  const auto in = static_cast<std::size_t>(s.in), out = static_cast<std::size_t>(s.out);
  switch (s.kind) {
    case LayerKind::conv1d: return out * in * static_cast<std::size_t>(s.kernel) + out;
    case LayerKind::batchnorm: return 2 * in;
    case LayerKind::dense: return out * in + out;
    default: return 0;
  }
}

inline std::size_t count_params(const std::vector<LayerSpec>& specs) {
  std::size_t total = 0;
  for (const auto& s : specs) total += layer_param_count(s);
  return total;
}

/// Output shape of every layer for the given input; throws ShapeMismatch
/// on the first inconsistency.
inline std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& specs, Shape input = kEpochInput) {
  std::vector<Shape> shapes;
  Shape cur = input;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(s.kind)) + "): ";
    switch (s.kind) {
      case LayerKind::conv1d:
        if (s.kernel < 1 || s.kernel % 2 == 0) throw Error(Errc::shape_mismatch, where + "kernel size must be odd");
        if (s.in != cur.channels) throw Error(Errc::shape_mismatch, where + "input channel count differs");
        if (s.out < 1) throw Error(Errc::shape_mismatch, where + "needs at least one output channel");
        cur.channels = s.out;
        break;
      case LayerKind::batchnorm:
        if (s.in != cur.channels) throw Error(Errc::shape_mismatch, where + "channel count differs");
        break;
      case LayerKind::relu:
        break;
      case LayerKind::maxpool:
        if (s.pool < 1 || cur.length % s.pool != 0)
          throw Error(Errc::shape_mismatch, where + "pool factor must divide length " + std::to_string(cur.length));
        cur.length /= s.pool;
        break;
      case LayerKind::global_avg_pool:
        cur.length = 1;
        break;
      case LayerKind::dropout:
        if (!(s.rate >= 0.0 && s.rate < 1.0)) throw Error(Errc::shape_mismatch, where + "rate must be in [0, 1)");
        break;
      case LayerKind::dense:
        if (static_cast<std::size_t>(s.in) != cur.size())
          throw Error(Errc::shape_mismatch, where + "expects " + std::to_string(s.in) + " inputs, got " +
                                                std::to_string(cur.size()));
        if (s.out < 1) throw Error(Errc::shape_mismatch, where + "needs at least one output");
        cur = {s.out, 1};
        break;
      case LayerKind::softmax:
        if (i + 1 != specs.size()) throw Error(Errc::shape_mismatch, where + "softmax must be the last layer");
        if (cur.length != 1 || cur.channels < 2) throw Error(Errc::shape_mismatch, where + "needs a class vector");
        break;
    }
    shapes.push_back(cur);
  }
  if (specs.empty() || specs.back().kind != LayerKind::softmax)
    throw Error(Errc::shape_mismatch, "network must end in softmax");
  return shapes;
}

template <class T>
struct LayerParams {
  std::vector<T> weight;  // conv: [out][in][kernel]; dense: [out][in]
  std::vector<T> bias;
  std::vector<T> gamma, beta;                  // batchnorm scale/shift
  std::vector<T> running_mean, running_var;    // batchnorm state

  /// Trainable tensors in checkpoint order.
  template <class F>
  void for_each_trainable(F&& f) {
    for (auto* v : {&weight, &bias, &gamma, &beta})
      if (!v->empty()) f(*v);
  }
  template <class F>
  void for_each_trainable(F&& f) const {
    for (auto* v : {&weight, &bias, &gamma, &beta})
      if (!v->empty()) f(*v);
  }
};

template <class T>
struct ModelParams {
  std::vector<LayerSpec> specs;
  Shape input = kEpochInput;
  std::uint64_t seed = 0;
  std::vector<LayerParams<T>> layers;

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) l.for_each_trainable([&](const std::vector<T>& v) { n += v.size(); });
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      for (const auto* v : {&l.weight, &l.bias, &l.gamma, &l.beta, &l.running_mean, &l.running_var})
        for (T x : *v)
          if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

using neosleep::derive_seed;
using neosleep::splitmix64;

/// Uniform He initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <class T = double>
std::vector<T> he_uniform_init(int fan_in, std::size_t n, std::uint64_t seed) {
  if (fan_in < 1) throw Error(Errc::shape_mismatch, "fan_in must be at least 1");
  const double limit = std::sqrt(6.0 / fan_in);
  std::vector<T> out(n);
  std::uint64_t state = seed;
  for (auto& v : out) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;  // [0, 1)
    v = static_cast<T>(limit * (2.0 * u - 1.0));
  }
  return out;
}

template <class T = float>
ModelParams<T> build_model(const std::vector<LayerSpec>& specs, std::uint64_t seed, Shape input = kEpochInput) {
  infer_shapes(specs, input);
  ModelParams<T> m;
  m.specs = specs;
  m.input = input;
  m.seed = seed;
  m.layers.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    auto& p = m.layers[i];
    const auto in = static_cast<std::size_t>(s.in), out = static_cast<std::size_t>(s.out);
    const std::uint64_t layer_seed = derive_seed(seed, i);
    switch (s.kind) {
      case LayerKind::conv1d:
        p.weight = he_uniform_init<T>(s.in * s.kernel, out * in * static_cast<std::size_t>(s.kernel), layer_seed);
        p.bias.assign(out, T(0));
        break;
      case LayerKind::dense:
        p.weight = he_uniform_init<T>(s.in, out * in, layer_seed);
        p.bias.assign(out, T(0));
        break;
      case LayerKind::batchnorm:
        p.gamma.assign(in, T(1));
        p.beta.assign(in, T(0));
        p.running_mean.assign(in, T(0));
        p.running_var.assign(in, T(1));
        break;
      default:
        break;
    }
  }
  return m;
}

template <class U, class T>
ModelParams<U> convert(const ModelParams<T>& m) {
  ModelParams<U> out;
  out.specs = m.specs;
  out.input = m.input;
  out.seed = m.seed;
  out.layers.resize(m.layers.size());
  auto cast = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& a = m.layers[i];
    auto& b = out.layers[i];
    b.weight = cast(a.weight);
    b.bias = cast(a.bias);
    b.gamma = cast(a.gamma);
    b.beta = cast(a.beta);
    b.running_mean = cast(a.running_mean);
    b.running_var = cast(a.running_var);
  }
  return out;
}

}  // namespace neosleep::nn
