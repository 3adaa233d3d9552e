// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "aagn/image_io.hpp"
#include "aagn/ops.hpp"

namespace aagn::warp {

/// out[p] = bilinear(img, p + flow[p]). Sample coordinates are clamped to the
/// image (border clamp). Differentiable in both img and flow; the flow
/// gradient is zero along a clamped axis. img may have any channel count.
template <typename T>
ag::Var<T> backward_warp(const ag::Var<T>& img, const ag::Var<T>& flow);

Portrait backward_warp(const Portrait& img, const FlowField& flow);

/// Bilinear upsampling of each component (corner-aligned grid, see
/// ops::resize_bilinear) followed by multiplying displacements by `scale`.
/// scale * (h, w) must be integral.
template <typename T>
ag::Var<T> upsample_flow(const ag::Var<T>& flow, double scale);

FlowField upsample_flow(const FlowField& flow, double scale);

/// flow * mu; |mu| must not exceed 1.
FlowField apply_strength(const FlowField& flow, double mu);

/// FLO1 flow file: "AAGN", uint32 h, uint32 w, then h*w*(dx, dy) float32,
/// all little-endian. Only batch item 0 is written.
void write_flo1(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo1(const std::filesystem::path& path);

}  // namespace aagn::warp
