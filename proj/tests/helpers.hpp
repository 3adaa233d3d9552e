// Shared test utilities: random tensors and a finite-difference gradient checker.

#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aagn/nn.hpp"

namespace testutil {

using aagn::Rng;
using aagn::Shape;
using aagn::Tensor;
using aagn::ag::Var;

template <typename T = double>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T = double>
Var<T> random_leaf(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Var<T>(random_tensor<T>(s, rng, lo, hi), true);
}

/// sum(out * R) with a fixed random R, so every output element matters.
inline Var<double> random_projection(const Var<double>& out, std::uint64_t seed) {
  Rng rng(seed);
  return aagn::ops::sum(
      aagn::ops::mul(out, aagn::ops::constant(random_tensor<double>(out.shape(), rng))));
}

struct GradReport {
  std::string name;
  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6); the floor keeps
  // gradients that vanish identically from being judged on rounding noise.
  double rel_error = 0.0;
  double numeric_norm = 0.0;
};

/// Central differences on up to `max_per_leaf` entries of every leaf.
inline std::vector<GradReport> grad_check(std::vector<std::pair<std::string, Var<double>>> leaves,
                                          const std::function<Var<double>()>& loss,
                                          double eps = 1e-6, std::size_t max_per_leaf = 48) {
  for (auto& [n, v] : leaves) v.zero_grad();
  const auto root = loss();
  aagn::ag::backward(root);
  std::vector<GradReport> out;
  Rng pick(0xc0ffee);
  for (auto& [name, v] : leaves) {
    const Tensor<double> analytic =
        v.grad().empty() ? Tensor<double>(v.shape()) : Tensor<double>(v.grad());
    std::vector<std::size_t> idx(v.value().size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_per_leaf) {
      for (std::size_t i = 0; i < max_per_leaf; ++i) {
        std::swap(idx[i], idx[i + pick.next() % (idx.size() - i)]);
      }
      idx.resize(max_per_leaf);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    aagn::ag::NoGradGuard ng;
    for (std::size_t i : idx) {
      double& x = v.mutable_value()[i];
      const double x0 = x;
      x = x0 + eps;
      const double fp = loss().value()[0];
      x = x0 - eps;
      const double fm = loss().value()[0];
      x = x0;
      const double num = (fp - fm) / (2.0 * eps);
      const double ana = analytic[i];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    out.push_back({name, std::sqrt(diff2) / denom, std::sqrt(n2)});
  }
  return out;
}

inline void require_grads_match(const std::vector<GradReport>& reports, double tol = 1e-4) {
  for (const auto& r : reports) {
    INFO("leaf " << r.name << " rel error " << r.rel_error << " |g| " << r.numeric_norm);
    CHECK(r.rel_error <= tol);
  }
}

inline std::vector<std::pair<std::string, Var<double>>> leaves_of(
    const aagn::nn::ParamSet<double>& params) {
  return params.items();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("aagn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small run: 32x32 images, narrow networks, a few steps.
inline std::string tiny_ini(const std::string& out_dir, const std::string& extra = "") {
  return "[train]\nlr = 0.001\nbatch = 2\nsteps = 6\nseed = 3\neval_interval = 3\n"
         "checkpoint_interval = 3\nout_dir = " + out_dir +
         "\n[data]\ncount = 12\nsize = 32\nseed = 9\nholdout = 0.25\n"
         "[model]\nfg_channels = 8,8,8\naag_channels = 4\naag_hidden = 4\n"
         "bsd_channels = 4,4\n" + extra;
}

}  // namespace testutil
