// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor operations. Every op is instantiated for float
// (training, inference) and double (gradient checks).

#pragma once

#include <vector>

#include "aagn/autograd.hpp"

namespace aagn::ops {

template <typename T>
using Var = ag::Var<T>;

// Elementwise arithmetic; operands must share a shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
/// a * x + b elementwise.
template <typename T> Var<T> affine(const Var<T>& x, T a, T b);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
/// log(clamp(x, eps, 1 - eps)); the gradient is zero where clamping is active.
template <typename T> Var<T> log_clamped(const Var<T>& x, T eps);

/// 2-D cross-correlation. `weight` is (c_out, c_in, k, k); `bias` is
/// (1, c_out, 1, 1) or undefined. Zero padding of `pad` pixels on each side.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

/// Bilinear resize with corner-aligned origin: output pixel x samples the
/// source at x * in_w / out_w, clamped to the last source pixel.
template <typename T> Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);

/// Non-overlapping k x k box average (area downsampling).
template <typename T> Var<T> avg_pool(const Var<T>& x, int k);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
template <typename T> Var<T> slice_channels(const Var<T>& x, int begin, int count);

/// (n, c, h, w) -> (n, 1, h*w, c): one row per spatial position.
template <typename T> Var<T> to_tokens(const Var<T>& x);
/// Inverse of to_tokens.
template <typename T> Var<T> from_tokens(const Var<T>& tokens, int h, int w);

/// Batched product over the last two dims of (n, 1, rows, cols) operands.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a, bool transpose_b);

/// Softmax along the last (w) axis.
template <typename T> Var<T> softmax_rows(const Var<T>& x);

/// Per-(n, c) spatial max and mean, shape (n, c, 1, 1).
template <typename T> Var<T> spatial_max(const Var<T>& x);
template <typename T> Var<T> spatial_mean(const Var<T>& x);

/// x (n, c, h, w) times per-channel gate g (n, c, 1, 1).
template <typename T> Var<T> channel_scale(const Var<T>& x, const Var<T>& g);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Mean squared difference over all elements.
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

/// Constant leaf helper.
template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

}  // namespace aagn::ops
