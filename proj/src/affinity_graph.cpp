// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/affinity_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace aagn::affinity {

namespace {

constexpr double kSlope = 0.2;

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return ops::leaky_relu(x, static_cast<T>(kSlope));
}

template <typename T>
void require_finite(const Var<T>& v, const std::string& what) {
  if (!v.value().all_finite()) throw NumericError("non-finite values in " + what);
}

}  // namespace

template <typename T>
Var<T> PartEncoder<T>::operator()(const Var<T>& part_stack) const {
  const Shape s = part_stack.shape();
  if (s.h % AagConfig::kEncoderStride != 0 || s.w % AagConfig::kEncoderStride != 0) {
    throw ShapeError("part encoder input " + s.str() + " not divisible by stride " +
                     std::to_string(AagConfig::kEncoderStride));
  }
  if (s.c != c1.weight.shape().c) {
    throw ShapeError("part encoder expects " + std::to_string(c1.weight.shape().c) +
                     " channels, got " + s.str());
  }
  return lrelu(c3(lrelu(c2(lrelu(c1(part_stack))))));
}

template <typename T>
Var<T> ChannelMlp<T>::operator()(const Var<T>& descriptor) const {
  return fc2(ops::relu(fc1(descriptor)));
}

template <typename T>
Var<T> pairwise_affinity(const Var<T>& fi, const Var<T>& fj, const PairProjection<T>& proj,
                         Var<T>* attention) {
  require_same_shape(fi.shape(), fj.shape(), "pairwise_affinity");
  const Shape s = fi.shape();
  auto q = ops::to_tokens(proj.q(fi));
  auto k = ops::to_tokens(proj.k(fj));
  auto v = ops::to_tokens(proj.v(fj));
  // (n, 1, hw, hw): row = query position in part i, column = key position in part j.
  auto logits = ops::scale(ops::matmul(q, k, false, true), static_cast<T>(1.0 / std::sqrt(s.c)));
  auto weights = ops::softmax_rows(logits);
  if (attention) *attention = weights;
  auto out = ops::from_tokens(ops::matmul(weights, v, false, false), s.h, s.w);
  return out;
}

template <typename T>
Var<T> stack_affinities(const std::vector<Var<T>>& pairs, const nn::Conv<T>& compress) {
  if (pairs.size() != static_cast<std::size_t>(kNumPairs)) {
    throw ShapeError("stack_affinities: expected 9 pair affinities, got " +
                     std::to_string(pairs.size()));
  }
  std::vector<Var<T>> squeezed;
  squeezed.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!pairs[p].defined()) {
      throw ShapeError("stack_affinities: missing pair " + std::to_string(p));
    }
    require_same_shape(pairs[p].shape(), pairs[0].shape(), "stack_affinities");
    squeezed.push_back(compress(pairs[p]));
  }
  return ops::concat_channels(squeezed);
}

template <typename T>
Reweighted<T> channel_reweight(const Var<T>& stacked, const ChannelMlp<T>& mlp) {
  auto from_max = mlp(ops::spatial_max(stacked));
  auto from_avg = mlp(ops::spatial_mean(stacked));
  auto weights = ops::sigmoid(ops::add(from_max, from_avg));
  return {weights, ops::channel_scale(stacked, weights)};
}

template <typename T>
PointAffinity point_affinity_qk(const Tensor<T>& queries, const Tensor<T>& keys, int row, int col,
                                int top_k) {
  const Shape s = queries.shape();
  require_same_shape(s, keys.shape(), "point_affinity");
  if (s.n != 1) throw ShapeError("point_affinity works on a single sample");
  if (row < 0 || row >= s.h || col < 0 || col >= s.w) {
    throw RangeError("query point (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside the " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " feature grid");
  }
  const int hw = s.h * s.w;
  if (top_k < 0 || top_k > hw) {
    throw RangeError("top_k must lie in [0, " + std::to_string(hw) + "]");
  }
  PointAffinity out;
  out.h = s.h;
  out.w = s.w;
  out.heatmap.assign(static_cast<std::size_t>(hw), 0.0);
  const int q = row * s.w + col;
  for (int k = 0; k < hw; ++k) {
    T acc = T(0);
    for (int c = 0; c < s.c; ++c) acc += queries.plane(0, c)[q] * keys.plane(0, c)[k];
    out.heatmap[static_cast<std::size_t>(k)] = static_cast<double>(acc / static_cast<T>(s.c));
  }
  std::vector<int> order(static_cast<std::size_t>(hw));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return out.heatmap[static_cast<std::size_t>(a)] > out.heatmap[static_cast<std::size_t>(b)];
  });
  for (int i = 0; i < top_k; ++i) {
    const int k = order[static_cast<std::size_t>(i)];
    out.top.push_back({k / s.w, k % s.w, out.heatmap[static_cast<std::size_t>(k)]});
  }
  return out;
}

template <typename T>
PointAffinity point_affinity(const Tensor<T>& fi, const Tensor<T>& fj,
                             const PairProjection<T>& proj, int row, int col, int top_k) {
  require_same_shape(fi.shape(), fj.shape(), "point_affinity");
  auto q = proj.q(ops::constant(fi)).value();
  auto k = proj.k(ops::constant(fj)).value();
  return point_affinity_qk(q, k, row, col, top_k);
}

template <typename T>
AffinityGraph<T>::AffinityGraph(nn::ParamSet<T>& params, const AagConfig& cfg,
                                 const skeleton::BoneTable& bones, Rng& rng)
    : cfg_(cfg), bones_(bones) {
  bones_.validate();
  const int c = cfg.feature_channels;
  for (skeleton::Part part : skeleton::kAllParts) {
    const auto idx = static_cast<std::size_t>(part);
    const int k_in = static_cast<int>(bones_.channels_of(part).size());
    const std::string base = "aag.enc." + skeleton::part_name(part);
    encoders_[idx].c1 = nn::make_conv(params, base + ".c1", k_in, cfg.hidden_channels, 3, 2, rng);
    encoders_[idx].c2 = nn::make_conv(params, base + ".c2", cfg.hidden_channels, c, 3, 2, rng);
    encoders_[idx].c3 = nn::make_conv(params, base + ".c3", c, c, 3, 1, rng);
  }
  for (int p = 0; p < kNumPairs; ++p) {
    const std::string base = "aag.pair" + std::to_string(p);
    auto& proj = pairs_[static_cast<std::size_t>(p)];
    proj.q = nn::make_conv(params, base + ".q", c, c, 1, 1, rng, 0.7);
    proj.k = nn::make_conv(params, base + ".k", c, c, 1, 1, rng, 0.7);
    proj.v = nn::make_conv(params, base + ".v", c, c, 1, 1, rng, 0.7);
  }
  compress_ = nn::make_conv(params, "aag.compress", c, 1, 1, 1, rng, 0.7);
  const int hidden = (kNumPairs + cfg.cbam_reduction - 1) / cfg.cbam_reduction;
  mlp_.fc1 = nn::make_conv(params, "aag.cbam.fc1", kNumPairs, hidden, 1, 1, rng);
  mlp_.fc2 = nn::make_conv(params, "aag.cbam.fc2", hidden, kNumPairs, 1, 1, rng);
}

template <typename T>
Var<T> AffinityGraph<T>::encode_part(skeleton::Part part, const Var<T>& stack) const {
  return encoders_[static_cast<std::size_t>(part)](stack);
}

template <typename T>
std::array<Var<T>, 3> AffinityGraph<T>::encode_parts(const Var<T>& skeleton_map) const {
  if (skeleton_map.shape().c != static_cast<int>(bones_.bones.size())) {
    throw ShapeError("affinity graph expects a 12-channel skeleton map, got " +
                     skeleton_map.shape().str());
  }
  std::array<Var<T>, 3> feats;
  for (skeleton::Part part : skeleton::kAllParts) {
    const auto chans = bones_.channels_of(part);
    const bool contiguous = chans.back() - chans.front() + 1 == static_cast<int>(chans.size());
    Var<T> stack;
    if (contiguous) {
      stack = ops::slice_channels(skeleton_map, chans.front(), static_cast<int>(chans.size()));
    } else {
      std::vector<Var<T>> pieces;
      for (int ch : chans) pieces.push_back(ops::slice_channels(skeleton_map, ch, 1));
      stack = ops::concat_channels(pieces);
    }
    feats[static_cast<std::size_t>(part)] = encode_part(part, stack);
  }
  return feats;
}

template <typename T>
AagOutput<T> AffinityGraph<T>::run_from_features(const std::array<Var<T>, 3>& features) const {
  std::vector<Var<T>> pairs;
  pairs.reserve(kNumPairs);
  for (int i = 0; i < skeleton::kNumParts; ++i) {
    for (int j = 0; j < skeleton::kNumParts; ++j) {
      auto a = pairwise_affinity(features[static_cast<std::size_t>(i)],
                                 features[static_cast<std::size_t>(j)], projection(i, j));
      require_finite(a, "affinity pair (" + skeleton::part_name(static_cast<skeleton::Part>(i)) +
                            "," + skeleton::part_name(static_cast<skeleton::Part>(j)) + ")");
      pairs.push_back(a);
    }
  }
  AagOutput<T> out;
  out.stacked = stack_affinities(pairs, compress_);
  if (!cfg_.use_cbam) {
    out.global = out.stacked;
    return out;
  }
  auto rw = channel_reweight(out.stacked, mlp_);
  out.global = rw.global;
  out.weights = rw.weights;
  return out;
}

template <typename T>
AagOutput<T> AffinityGraph<T>::run(const Var<T>& skeleton_map) const {
  return run_from_features(encode_parts(skeleton_map));
}

#define AAGN_INSTANTIATE_AAG(T)                                                                  \
  template struct PartEncoder<T>;                                                                \
  template struct ChannelMlp<T>;                                                                 \
  template Var<T> pairwise_affinity(const Var<T>&, const Var<T>&, const PairProjection<T>&,      \
                                    Var<T>*);                                                    \
  template Var<T> stack_affinities(const std::vector<Var<T>>&, const nn::Conv<T>&);              \
  template Reweighted<T> channel_reweight(const Var<T>&, const ChannelMlp<T>&);                  \
  template PointAffinity point_affinity_qk(const Tensor<T>&, const Tensor<T>&, int, int, int);   \
  template PointAffinity point_affinity(const Tensor<T>&, const Tensor<T>&,                      \
                                        const PairProjection<T>&, int, int, int);                \
  template class AffinityGraph<T>;

AAGN_INSTANTIATE_AAG(float)
AAGN_INSTANTIATE_AAG(double)

}  // namespace aagn::affinity
