// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/objectives.hpp"

#include <array>
#include <cmath>

namespace aagn::objectives {

namespace {

constexpr std::array<int, 4> kWidths{16, 16, 32, 32};
constexpr std::array<int, 4> kStrides{1, 2, 1, 2};

}  // namespace

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(int layer, std::uint64_t seed) : layer_(layer) {
  if (layer < 0 || layer > kMaxLayer) {
    throw ConfigError("perceptual layer must lie in [0, " + std::to_string(kMaxLayer) + "]");
  }
  Rng rng(seed);
  int c_in = 3;
  for (std::size_t l = 0; l < kWidths.size(); ++l) {
    Tensor<T> w(Shape{kWidths[l], c_in, 3, 3});
    const double sd = std::sqrt(2.0 / (c_in * 9.0));
    for (auto& v : w.values()) v = static_cast<T>(rng.normal() * sd);
    nn::Conv<T> conv;
    conv.weight = params_.add("perc" + std::to_string(l) + ".weight", std::move(w), false);
    conv.stride = kStrides[l];
    conv.pad = 1;
    convs_.push_back(conv);
    c_in = kWidths[l];
  }
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(int layer, std::vector<Tensor<T>> weights,
                                            std::vector<Tensor<T>> biases, std::vector<int> strides)
    : layer_(layer) {
  if (weights.size() != strides.size() || (!biases.empty() && biases.size() != weights.size())) {
    throw ConfigError("perceptual extractor: weights, biases and strides disagree in length");
  }
  if (layer < 0 || layer > static_cast<int>(weights.size())) {
    throw ConfigError("perceptual layer out of range");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    nn::Conv<T> conv;
    conv.weight = params_.add("perc" + std::to_string(l) + ".weight", std::move(weights[l]), false);
    if (!biases.empty()) {
      conv.bias = params_.add("perc" + std::to_string(l) + ".bias", std::move(biases[l]), false);
    }
    conv.stride = strides[l];
    conv.pad = conv.weight.shape().h / 2;
    convs_.push_back(conv);
  }
}

template <typename T>
Var<T> PerceptualExtractor<T>::operator()(const Var<T>& img) const {
  Var<T> x = img;
  for (int l = 0; l < layer_; ++l) x = ops::relu(convs_[static_cast<std::size_t>(l)](x));
  return x;
}

template <typename T>
Var<T> flow_loss(const Var<T>& target, const Var<T>& predicted) {
  require_same_shape(target.shape(), predicted.shape(), "flow_loss");
  return ops::mse(target, predicted);
}

template <typename T>
Var<T> img_loss(const Var<T>& target, const Var<T>& predicted) {
  require_same_shape(target.shape(), predicted.shape(), "img_loss");
  return ops::mse(target, predicted);
}

template <typename T>
Var<T> vgg_loss(const Var<T>& target, const Var<T>& predicted,
                const PerceptualExtractor<T>& extractor) {
  require_same_shape(target.shape(), predicted.shape(), "vgg_loss");
  return ops::mse(extractor(target), extractor(predicted));
}

template <typename T>
Var<T> adv_loss_d(const Var<T>& d_fake, const Var<T>& d_real) {
  require_same_shape(d_fake.shape(), d_real.shape(), "adv_loss_d");
  const T eps = static_cast<T>(kProbEps);
  auto fake_term = ops::log_clamped(ops::affine(d_fake, T(-1), T(1)), eps);
  auto real_term = ops::log_clamped(d_real, eps);
  // Per-sample terms are summed, then averaged over the batch.
  return ops::scale(ops::mean(ops::add(fake_term, real_term)), T(-1));
}

template <typename T>
Var<T> adv_loss_g(const Var<T>& d_fake) {
  return ops::scale(ops::mean(ops::log_clamped(d_fake, static_cast<T>(kProbEps))), T(-1));
}

template <typename T>
Var<T> total_loss(const LossTerms<T>& terms, const LossWeights& w) {
  const std::array<std::pair<const Var<T>*, double>, 4> parts{
      {{&terms.flow, w.flow}, {&terms.img, w.img}, {&terms.vgg, w.vgg}, {&terms.adv, w.adv}}};
  const std::array<const char*, 4> names{"L_flow", "L_img", "L_vgg", "L_adv"};
  Var<T> total(Tensor<T>(Shape{}), false);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Var<T>* term = parts[i].first;
    if (!term->defined()) continue;
    if (term->shape().numel() != 1) throw ShapeError(std::string(names[i]) + " is not a scalar");
    if (!std::isfinite(static_cast<double>(term->value()[0]))) {
      throw NumericError(std::string("non-finite loss component ") + names[i]);
    }
    total = ops::add(total, ops::scale(*term, static_cast<T>(parts[i].second)));
  }
  return total;
}

#define AAGN_INSTANTIATE_OBJ(T)                                                       \
  template class PerceptualExtractor<T>;                                              \
  template Var<T> flow_loss(const Var<T>&, const Var<T>&);                            \
  template Var<T> img_loss(const Var<T>&, const Var<T>&);                             \
  template Var<T> vgg_loss(const Var<T>&, const Var<T>&, const PerceptualExtractor<T>&); \
  template Var<T> adv_loss_d(const Var<T>&, const Var<T>&);                           \
  template Var<T> adv_loss_g(const Var<T>&);                                          \
  template Var<T> total_loss(const LossTerms<T>&, const LossWeights&);

AAGN_INSTANTIATE_OBJ(float)
AAGN_INSTANTIATE_OBJ(double)

}  // namespace aagn::objectives
