// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/flow_generator.hpp"

#include <algorithm>
#include <string>

namespace aagn::flowgen {

namespace {

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return ops::leaky_relu(x, static_cast<T>(0.2));
}

template <typename T>
void check_level(const Var<T>& v, const std::string& where) {
  if (!v.value().all_finite()) {
    throw NumericError("flow generator produced non-finite values at " + where);
  }
}

}  // namespace

void FgConfig::validate() const {
  if (channels.empty()) throw ConfigError("flow generator needs at least one level");
  for (int c : channels) {
    if (c <= 0) throw ConfigError("flow generator channel counts must be positive");
  }
  const int div = 1 << levels();
  if (input_h % div != 0 || input_w % div != 0) {
    throw ConfigError("flow generator resolution " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " not divisible by 2^levels = " +
                      std::to_string(div));
  }
  for (int l : inject_levels) {
    if (l < 0 || l >= levels()) {
      throw ConfigError("injection level " + std::to_string(l) + " is not a decoder level");
    }
  }
  if (!(max_disp > 0.0)) throw ConfigError("max_disp must be positive");
}

template <typename T>
Var<T> InjectionEncoder<T>::operator()(const Var<T>& affinity, int out_h, int out_w) const {
  auto mixed = mix(affinity);
  if (mixed.shape().h == out_h && mixed.shape().w == out_w) return mixed;
  return ops::resize_bilinear(mixed, out_h, out_w);
}

template <typename T>
Var<T> inject_affinity(const Var<T>& features, const Var<T>& affinity,
                       const InjectionEncoder<T>& enc) {
  const Shape fs = features.shape();
  auto encoded = enc(affinity, fs.h, fs.w);
  require_same_shape(encoded.shape(), fs, "inject_affinity");
  return ops::add(features, encoded);
}

template <typename T>
FlowGenerator<T>::FlowGenerator(nn::ParamSet<T>& params, const FgConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int levels = cfg_.levels();
  const auto& ch = cfg_.channels;
  for (int l = 0; l < levels; ++l) {
    const std::string base = "fg.enc" + std::to_string(l);
    const int c_in = l == 0 ? cfg_.in_channels : ch[static_cast<std::size_t>(l - 1)];
    const int c = ch[static_cast<std::size_t>(l)];
    enc_.push_back({nn::make_conv(params, base + ".a", c_in, c, 3, l == 0 ? 1 : 2, rng),
                    nn::make_conv(params, base + ".b", c, c, 3, 1, rng)});
  }
  for (int l = 0; l + 1 < levels; ++l) {
    const std::string base = "fg.dec" + std::to_string(l);
    const int c = ch[static_cast<std::size_t>(l)];
    const int c_in = ch[static_cast<std::size_t>(l + 1)] + c;
    dec_.push_back({nn::make_conv(params, base + ".a", c_in, c, 3, 1, rng),
                    nn::make_conv(params, base + ".b", c, c, 3, 1, rng)});
  }
  inject_.resize(static_cast<std::size_t>(levels));
  has_inject_.assign(static_cast<std::size_t>(levels), false);
  for (int l : cfg_.inject_levels) {
    if (has_inject_[static_cast<std::size_t>(l)]) continue;
    has_inject_[static_cast<std::size_t>(l)] = true;
    inject_[static_cast<std::size_t>(l)].mix =
        nn::make_conv(params, "fg.inject" + std::to_string(l), cfg_.affinity_channels,
                      ch[static_cast<std::size_t>(l)], 1, 1, rng, 0.5);
  }
  head_ = nn::make_conv(params, "fg.head", ch[0], 2, 3, 1, rng, cfg_.head_gain);
}

template <typename T>
std::pair<int, int> FlowGenerator<T>::level_size(int level) const {
  return {cfg_.input_h >> level, cfg_.input_w >> level};
}

template <typename T>
const InjectionEncoder<T>* FlowGenerator<T>::injection(int level) const {
  if (level < 0 || level >= cfg_.levels() || !has_inject_[static_cast<std::size_t>(level)]) {
    return nullptr;
  }
  return &inject_[static_cast<std::size_t>(level)];
}

template <typename T>
Var<T> FlowGenerator<T>::operator()(const Var<T>& portrait, const Var<T>& skeleton,
                                    const Var<T>& affinity) const {
  const Shape ps = portrait.shape();
  const Shape ss = skeleton.shape();
  if (ps.c != 3 || ss.c != cfg_.in_channels - 3 || ps.n != ss.n || ps.h != ss.h ||
      ps.w != ss.w) {
    throw ShapeError("flow generator inputs " + ps.str() + " and " + ss.str() +
                     " do not match the configuration");
  }
  if (ps.h != cfg_.input_h || ps.w != cfg_.input_w) {
    throw ShapeError("flow generator expects " + std::to_string(cfg_.input_h) + "x" +
                     std::to_string(cfg_.input_w) + " inputs, got " + ps.str());
  }
  const bool inject = cfg_.aag_enabled && affinity.defined();
  const int levels = cfg_.levels();

  std::vector<Var<T>> skips;
  Var<T> x = ops::concat_channels<T>({portrait, skeleton});
  for (int l = 0; l < levels; ++l) {
    const auto& blk = enc_[static_cast<std::size_t>(l)];
    x = lrelu(blk.b(lrelu(blk.a(x))));
    skips.push_back(x);
  }

  auto maybe_inject = [&](Var<T> feat, int level) {
    if (inject && has_inject_[static_cast<std::size_t>(level)]) {
      feat = inject_affinity(feat, affinity, inject_[static_cast<std::size_t>(level)]);
    }
    check_level(feat, "decoder level " + std::to_string(level));
    return feat;
  };

  Var<T> d = maybe_inject(skips.back(), levels - 1);
  for (int l = levels - 2; l >= 0; --l) {
    const auto [h, w] = level_size(l);
    auto up = ops::resize_bilinear(d, h, w);
    const auto& blk = dec_[static_cast<std::size_t>(l)];
    d = lrelu(blk.b(lrelu(blk.a(ops::concat_channels<T>({up, skips[static_cast<std::size_t>(l)]})))));
    d = maybe_inject(d, l);
  }
  auto flow = ops::scale(ops::tanh(head_(d)), static_cast<T>(cfg_.max_disp));
  check_level(flow, "the flow head");
  return flow;
}

template struct InjectionEncoder<float>;
template struct InjectionEncoder<double>;
template Var<float> inject_affinity(const Var<float>&, const Var<float>&,
                                    const InjectionEncoder<float>&);
template Var<double> inject_affinity(const Var<double>&, const Var<double>&,
                                     const InjectionEncoder<double>&);
template class FlowGenerator<float>;
template class FlowGenerator<double>;

}  // namespace aagn::flowgen
