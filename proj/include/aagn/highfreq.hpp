// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed SRM residual filters exposing high-frequency content.

#pragma once

#include <array>
#include <filesystem>

#include "aagn/image_io.hpp"
#include "aagn/ops.hpp"

namespace aagn::highfreq {

struct SrmKernel {
  std::array<std::array<int, 5>, 5> taps;
  int divisor;
};

/// First-order, second-order and KV kernels, in output channel order.
const std::array<SrmKernel, 3>& srm_kernels();

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2 …).
int reflect_index(int i, int n);

/// For each kernel: 5x5 cross-correlation of every colour channel with
/// reflect padding, averaged over colours. (n, 3, H, W) -> (n, 3, H, W).
/// Linear, so gradients flow back to the image.
template <typename T>
ag::Var<T> srm_filter(const ag::Var<T>& img);

Tensor<float> srm_filter(const Portrait& img);

/// Signed residuals to PNG per kernel as 0.5 + gain * r.
void export_residual_pngs(const Tensor<float>& residuals, const std::filesystem::path& prefix,
                          float gain = 4.0f);

}  // namespace aagn::highfreq
