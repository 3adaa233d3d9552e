// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Adaptive Affinity-Graph block.
//
// Each body part stack is encoded to an (h, w, C) feature map. For every
// ordered part pair (i, j) a scaled dot-product attention lets the queries of
// part i attend over the keys/values of part j; the nine results are squeezed
// to one channel each by a shared 1x1 encoder and stacked, then gated per
// channel by a CBAM-style sigmoid over spatial max and mean descriptors.

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "aagn/nn.hpp"
#include "aagn/skeleton.hpp"

namespace aagn::affinity {

inline constexpr int kNumPairs = 9;

/// Channel index of ordered pair (i, j): row-major over (arms, torso, legs).
constexpr int pair_index(int i, int j) { return i * skeleton::kNumParts + j; }

struct AagConfig {
  int feature_channels = 32;  // C
  int hidden_channels = 16;   // first encoder conv width
  int cbam_reduction = 3;     // 9 -> ceil(9 / r) -> 9
  bool use_cbam = true;
  /// Spatial reduction of the part encoders (two stride-2 convs).
  static constexpr int kEncoderStride = 4;
};

template <typename T>
using Var = ag::Var<T>;

/// Three conv blocks: stride 2, stride 2, stride 1, leaky ReLU after each.
template <typename T>
struct PartEncoder {
  nn::Conv<T> c1, c2, c3;

  Var<T> operator()(const Var<T>& part_stack) const;
};

/// 1x1 query / key / value projections for one ordered pair.
template <typename T>
struct PairProjection {
  nn::Conv<T> q, k, v;
};

/// Shared two-layer perceptron of the channel gate (1x1 convs on (n, 9, 1, 1)).
template <typename T>
struct ChannelMlp {
  nn::Conv<T> fc1, fc2;

  Var<T> operator()(const Var<T>& descriptor) const;
};

template <typename T>
struct Reweighted {
  Var<T> weights;  // (n, 9, 1, 1), each in (0, 1)
  Var<T> global;   // (n, 9, h, w) = weights * stacked
};

template <typename T>
struct AagOutput {
  Var<T> global;              // A_e (or the raw stack when CBAM is off)
  Var<T> stacked;             // A
  std::optional<Var<T>> weights;  // W_c when CBAM is on
};

/// Attention output for queries of `fi` over keys/values of `fj`, shape of
/// `fi`. When `attention` is given it receives the (n, 1, hw, hw) row-
/// stochastic matrix.
template <typename T>
Var<T> pairwise_affinity(const Var<T>& fi, const Var<T>& fj, const PairProjection<T>& proj,
                         Var<T>* attention = nullptr);

/// Squeezes each of the nine pair maps to one channel and concatenates them
/// in pair order.
template <typename T>
Var<T> stack_affinities(const std::vector<Var<T>>& pairs, const nn::Conv<T>& compress);

template <typename T>
Reweighted<T> channel_reweight(const Var<T>& stacked, const ChannelMlp<T>& mlp);

struct PointAffinity {
  int h = 0;
  int w = 0;
  std::vector<double> heatmap;  // row-major h * w
  struct Point {
    int row;
    int col;
    double value;
  };
  std::vector<Point> top;  // descending value, ties by row-major index
};

/// heatmap[k] = mean over channels of Q[q] * K[k] on precomputed query/key
/// maps of shape (1, C, h, w).
template <typename T>
PointAffinity point_affinity_qk(const Tensor<T>& queries, const Tensor<T>& keys, int row, int col,
                                int top_k);

/// Projects `fi`/`fj` with the pair's query/key maps, then point_affinity_qk.
template <typename T>
PointAffinity point_affinity(const Tensor<T>& fi, const Tensor<T>& fj,
                             const PairProjection<T>& proj, int row, int col, int top_k);

/// Parameters and composition of the whole block.
template <typename T>
class AffinityGraph {
 public:
  AffinityGraph(nn::ParamSet<T>& params, const AagConfig& cfg, const skeleton::BoneTable& bones,
                Rng& rng);

  [[nodiscard]] const AagConfig& config() const { return cfg_; }
  void set_use_cbam(bool on) { cfg_.use_cbam = on; }

  /// Encodes one part stack (n, k_part, H, W) -> (n, C, H/4, W/4).
  Var<T> encode_part(skeleton::Part part, const Var<T>& stack) const;
  /// Encodes the three part stacks sliced out of a (n, 12, H, W) skeleton map.
  std::array<Var<T>, 3> encode_parts(const Var<T>& skeleton_map) const;

  AagOutput<T> run(const Var<T>& skeleton_map) const;
  /// Same composition starting from already encoded features.
  AagOutput<T> run_from_features(const std::array<Var<T>, 3>& features) const;

  [[nodiscard]] const PairProjection<T>& projection(int i, int j) const {
    return pairs_[static_cast<std::size_t>(pair_index(i, j))];
  }
  [[nodiscard]] const nn::Conv<T>& compress() const { return compress_; }
  [[nodiscard]] const ChannelMlp<T>& channel_mlp() const { return mlp_; }

 private:
  AagConfig cfg_;
  skeleton::BoneTable bones_;
  std::array<PartEncoder<T>, 3> encoders_;
  std::array<PairProjection<T>, kNumPairs> pairs_;
  nn::Conv<T> compress_;
  ChannelMlp<T> mlp_;
};

}  // namespace aagn::affinity
