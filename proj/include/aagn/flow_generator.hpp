// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// U-shaped encoder/decoder emitting a low-resolution backward flow, with the
// global affinity added into selected decoder levels.

#pragma once

#include <vector>

#include "aagn/nn.hpp"

namespace aagn::flowgen {

template <typename T>
using Var = ag::Var<T>;

struct FgConfig {
  /// Channels per level, finest first; the level count is channels.size().
  std::vector<int> channels{32, 64, 128};
  int input_h = 64;
  int input_w = 64;
  int in_channels = 15;  // portrait (3) + skeleton (12)
  int affinity_channels = 9;
  /// Decoder levels (0 = full resolution) that receive the affinity.
  std::vector<int> inject_levels{1, 2};
  bool aag_enabled = true;
  double max_disp = 10.0;
  /// Std-dev multiplier of the flow head initialisation.
  double head_gain = 0.1;

  [[nodiscard]] int levels() const { return static_cast<int>(channels.size()); }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// 1x1 channel mixing from the affinity channels to C_i followed by a
/// bilinear resize to (H_i, W_i).
template <typename T>
struct InjectionEncoder {
  nn::Conv<T> mix;

  Var<T> operator()(const Var<T>& affinity, int out_h, int out_w) const;
};

/// features + enc(affinity); throws ShapeError if the encoded map does not
/// match the features.
template <typename T>
Var<T> inject_affinity(const Var<T>& features, const Var<T>& affinity,
                       const InjectionEncoder<T>& enc);

template <typename T>
class FlowGenerator {
 public:
  FlowGenerator(nn::ParamSet<T>& params, const FgConfig& cfg, Rng& rng);

  [[nodiscard]] const FgConfig& config() const { return cfg_; }
  void set_aag_enabled(bool on) { cfg_.aag_enabled = on; }

  /// portrait (n, 3, H, W), skeleton (n, 12, H, W), affinity (n, 9, h, w) or
  /// undefined -> flow (n, 2, H, W) with |flow| <= max_disp.
  Var<T> operator()(const Var<T>& portrait, const Var<T>& skeleton,
                    const Var<T>& affinity) const;

  /// Feature map size (h, w) of decoder level `level`.
  [[nodiscard]] std::pair<int, int> level_size(int level) const;
  [[nodiscard]] const InjectionEncoder<T>* injection(int level) const;

 private:
  struct Block {
    nn::Conv<T> a, b;
  };

  FgConfig cfg_;
  std::vector<Block> enc_;
  std::vector<Block> dec_;  // dec_[l] for l < levels - 1
  std::vector<InjectionEncoder<T>> inject_;  // indexed by level
  std::vector<bool> has_inject_;
  nn::Conv<T> head_;
};

}  // namespace aagn::flowgen
