// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/discriminator.hpp"

#include <string>

#include "aagn/highfreq.hpp"

namespace aagn::disc {

template <typename T>
Var<T> multiscale_block(const Var<T>& x, const MultiScaleBlock<T>& blk) {
  if (x.shape().h < 7 || x.shape().w < 7) {
    throw ShapeError("multiscale_block needs at least 7x7 input, got " + x.shape().str());
  }
  auto sum = ops::add(ops::add(blk.k3(x), blk.k5(x)), blk.k7(x));
  return ops::scale(sum, static_cast<T>(1) / static_cast<T>(3));
}

template <typename T>
Discriminator<T>::Discriminator(nn::ParamSet<T>& params, const BsdConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg_.channels.empty()) throw ConfigError("discriminator needs at least one block");
  int c_in = cfg_.use_srm ? 6 : 3;
  for (std::size_t b = 0; b < cfg_.channels.size(); ++b) {
    const int c = cfg_.channels[b];
    const std::string base = "bsd.block" + std::to_string(b);
    blocks_.push_back({nn::make_conv(params, base + ".k3", c_in, c, 3, 1, rng),
                       nn::make_conv(params, base + ".k5", c_in, c, 5, 1, rng),
                       nn::make_conv(params, base + ".k7", c_in, c, 7, 1, rng)});
    c_in = c;
  }
  fc_ = nn::make_conv(params, "bsd.fc", c_in, 1, 1, 1, rng, 0.5);
}

template <typename T>
Var<T> Discriminator<T>::logits(const Var<T>& portrait, const Var<T>& residuals) const {
  Var<T> x = portrait;
  if (cfg_.use_srm) {
    if (!residuals.defined()) throw ShapeError("discriminator: SRM residuals required");
    const Shape ps = portrait.shape();
    const Shape rs = residuals.shape();
    if (ps.n != rs.n || ps.h != rs.h || ps.w != rs.w) {
      throw ShapeError("discriminator: portrait " + ps.str() + " and residuals " + rs.str() +
                       " differ in resolution");
    }
    x = ops::concat_channels<T>({portrait, residuals});
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = ops::leaky_relu(multiscale_block(x, blocks_[b]), static_cast<T>(0.2));
    if (b + 1 < blocks_.size()) x = ops::avg_pool(x, 2);
  }
  return fc_(ops::spatial_mean(x));
}

template <typename T>
Var<T> Discriminator<T>::operator()(const Var<T>& portrait, const Var<T>& residuals) const {
  return ops::sigmoid(logits(portrait, residuals));
}

template <typename T>
Var<T> Discriminator<T>::probability(const Var<T>& portrait) const {
  Var<T> residuals;
  if (cfg_.use_srm) residuals = highfreq::srm_filter(portrait);
  return (*this)(portrait, residuals);
}

template Var<float> multiscale_block(const Var<float>&, const MultiScaleBlock<float>&);
template Var<double> multiscale_block(const Var<double>&, const MultiScaleBlock<double>&);
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace aagn::disc
