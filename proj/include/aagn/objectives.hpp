// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "aagn/discriminator.hpp"
#include "aagn/nn.hpp"

namespace aagn::objectives {

template <typename T>
using Var = ag::Var<T>;

struct LossWeights {
  double flow = 0.5;    // lambda1
  double img = 0.5;     // lambda2
  double vgg = 0.006;   // lambda3
  double adv = 0.001;   // lambda4
};

/// Numerical guard applied to discriminator probabilities before the log.
inline constexpr double kProbEps = 1e-7;

/// Fixed (never trained) convolutional feature stack used as a perceptual
/// space. Layer 0 is the identity; layers 1..4 are conv + ReLU with widths
/// (16, 16, 32, 32) and strides (1, 2, 1, 2), initialised from a fixed seed.
template <typename T>
class PerceptualExtractor {
 public:
  static constexpr int kMaxLayer = 4;

  explicit PerceptualExtractor(int layer = 2, std::uint64_t seed = 0x5eed);

  /// Adopts externally supplied weights (e.g. from a pretrained network).
  /// Weights must follow the (c_out, c_in, k, k) layout, one per layer.
  PerceptualExtractor(int layer, std::vector<Tensor<T>> weights, std::vector<Tensor<T>> biases,
                      std::vector<int> strides);

  [[nodiscard]] int layer() const { return layer_; }
  Var<T> operator()(const Var<T>& img) const;

 private:
  int layer_;
  nn::ParamSet<T> params_;
  std::vector<nn::Conv<T>> convs_;
};

template <typename T>
Var<T> flow_loss(const Var<T>& target, const Var<T>& predicted);
template <typename T>
Var<T> img_loss(const Var<T>& target, const Var<T>& predicted);
template <typename T>
Var<T> vgg_loss(const Var<T>& target, const Var<T>& predicted,
                const PerceptualExtractor<T>& extractor);

/// mean over the batch of -log(1 - D(fake)) - log(D(real)), probabilities
/// clamped to [eps, 1 - eps]. Inputs are (n, 1, 1, 1) probabilities.
template <typename T>
Var<T> adv_loss_d(const Var<T>& d_fake, const Var<T>& d_real);
/// Non-saturating generator term: mean over the batch of -log D(fake).
template <typename T>
Var<T> adv_loss_g(const Var<T>& d_fake);

/// Terms entering the weighted sum; an undefined term counts as disabled.
template <typename T>
struct LossTerms {
  Var<T> flow;
  Var<T> img;
  Var<T> vgg;
  Var<T> adv;
};

/// lambda1 * flow + lambda2 * img + lambda3 * vgg + lambda4 * adv over the
/// defined terms. Throws NumericError naming the first non-finite term.
template <typename T>
Var<T> total_loss(const LossTerms<T>& terms, const LossWeights& w);

}  // namespace aagn::objectives
