// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "aagn/nn.hpp"

namespace aagn::disc {

template <typename T>
using Var = ag::Var<T>;

struct BsdConfig {
  std::vector<int> channels{16, 32, 64};  // one multi-scale block per entry
  bool use_srm = true;
};

/// Parallel 3x3, 5x5 and 7x7 same-padded convolutions.
template <typename T>
struct MultiScaleBlock {
  nn::Conv<T> k3, k5, k7;
};

/// (k3(x) + k5(x) + k7(x)) / 3. Requires at least 7x7 spatial input.
template <typename T>
Var<T> multiscale_block(const Var<T>& x, const MultiScaleBlock<T>& blk);

/// Body shape discriminator: concat(portrait, residuals) -> multi-scale
/// blocks with 2x average pooling in between -> global mean -> linear ->
/// sigmoid probability that the photo is a target (human-edited) photo.
template <typename T>
class Discriminator {
 public:
  Discriminator(nn::ParamSet<T>& params, const BsdConfig& cfg, Rng& rng);

  [[nodiscard]] const BsdConfig& config() const { return cfg_; }

  /// Pre-sigmoid score, shape (n, 1, 1, 1). `residuals` is ignored (and may be
  /// undefined) when use_srm is off.
  Var<T> logits(const Var<T>& portrait, const Var<T>& residuals) const;
  /// Probability in (0, 1), shape (n, 1, 1, 1).
  Var<T> operator()(const Var<T>& portrait, const Var<T>& residuals) const;
  /// Computes the SRM residuals itself when use_srm is on.
  Var<T> probability(const Var<T>& portrait) const;

  [[nodiscard]] const nn::Conv<T>& final_layer() const { return fc_; }

 private:
  BsdConfig cfg_;
  std::vector<MultiScaleBlock<T>> blocks_;
  nn::Conv<T> fc_;
};

}  // namespace aagn::disc
