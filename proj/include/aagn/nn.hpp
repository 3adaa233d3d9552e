// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aagn/ops.hpp"

namespace aagn {

/// Seeded generator with platform-independent float conversion.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }
  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a seed with a stream index (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace nn {

template <typename T>
using Var = ag::Var<T>;

/// Ordered, named set of trainable leaves.
template <typename T>
class ParamSet {
 public:
  Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
    for (const auto& [n, v] : items_) {
      if (n == name) throw ConfigError("duplicate parameter name " + name);
    }
    Var<T> v(std::move(init), trainable);
    items_.emplace_back(name, v);
    return v;
  }

  void zero_grad() {
    for (auto& [n, v] : items_) v.zero_grad();
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t total = 0;
    for (const auto& [n, v] : items_) total += v.value().size();
    return total;
  }

  [[nodiscard]] std::vector<std::pair<std::string, Var<T>>>& items() { return items_; }
  [[nodiscard]] const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }

  [[nodiscard]] Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : items_) {
      if (n == name) return v;
    }
    throw ConfigError("no parameter named " + name);
  }

  /// Sets every value to zero (used to build identity/ablation cases).
  void zero_values() {
    for (auto& [n, v] : items_) v.mutable_value().fill(T(0));
  }

  /// Copies values by name from another set of the same layout, any scalar type.
  template <typename U>
  void copy_values_from(const ParamSet<U>& other) {
    for (auto& [n, v] : items_) {
      const auto& src = other.find(n).value();
      require_same_shape(v.shape(), src.shape(), "parameter " + n);
      auto& dst = v.mutable_value();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
};

/// Convolution layer: (c_out, c_in, k, k) weights, optional bias, same padding.
template <typename T>
struct Conv {
  Var<T> weight;
  Var<T> bias;
  int stride = 1;
  int pad = 0;

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
};

/// He-normal initialized conv scaled by `gain`; bias starts at zero.
template <typename T>
Conv<T> make_conv(ParamSet<T>& params, const std::string& name, int c_in, int c_out, int k,
                  int stride, Rng& rng, double gain = 1.0, bool with_bias = true) {
  Tensor<T> w(Shape{c_out, c_in, k, k});
  const double std_dev = gain * std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  for (auto& v : w.values()) v = static_cast<T>(rng.normal() * std_dev);
  Conv<T> conv;
  conv.weight = params.add(name + ".weight", std::move(w));
  if (with_bias) conv.bias = params.add(name + ".bias", Tensor<T>(Shape{1, c_out, 1, 1}));
  conv.stride = stride;
  conv.pad = k / 2;
  return conv;
}

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const ParamSet<T>& params, Options opt) : opt_(opt) {
    for (const auto& [n, v] : params.items()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void step(ParamSet<T>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double step_size = opt_.lr * std::sqrt(c2) / c1;
    const double eps_hat = opt_.eps * std::sqrt(c2);
    auto& items = params.items();
    for (std::size_t p = 0; p < items.size(); ++p) {
      auto& var = items[p].second;
      const auto& g = var.grad();
      auto& val = var.mutable_value();
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = g[i];
        m[i] = static_cast<T>(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi);
        v[i] = static_cast<T>(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi);
        val[i] = static_cast<T>(val[i] - step_size * m[i] / (std::sqrt(static_cast<double>(v[i])) + eps_hat));
      }
    }
  }

  [[nodiscard]] std::int64_t steps() const { return t_; }
  [[nodiscard]] const Options& options() const { return opt_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Tensor<T>>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor<T>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  Options opt_{};
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace nn
}  // namespace aagn
