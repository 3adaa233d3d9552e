// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aagn/tensor.hpp"

namespace aagn {

/// RGB image in [0, 1], shape (n, 3, H, W). Single images use n = 1.
using Portrait = Tensor<float>;
/// Backward displacement field (dx, dy) in pixels of its own grid, shape (n, 2, h, w).
using FlowField = Tensor<float>;

void check_portrait(const Shape& s, const std::string& what);
void check_flow(const Shape& s, const std::string& what);

/// Decodes PNG/JPEG bytes into a (1, 3, H, W) portrait (8-bit values / 255).
Portrait decode_image(const std::vector<std::uint8_t>& bytes);
Portrait load_image(const std::filesystem::path& path);

/// Rounds to 8 bits. Grayscale inputs (c = 1) produce single-channel PNGs.
std::vector<std::uint8_t> encode_png(const Tensor<float>& img, int batch_index = 0);
void save_png(const std::filesystem::path& path, const Tensor<float>& img, int batch_index = 0);

/// Writes one plane (n, c) as grayscale after mapping v -> offset + gain * v.
std::vector<std::uint8_t> encode_plane_png(const Tensor<float>& t, int n, int c, float gain = 1.0f,
                                           float offset = 0.0f);
void save_plane_png(const std::filesystem::path& path, const Tensor<float>& t, int n, int c,
                    float gain = 1.0f, float offset = 0.0f);

/// Rounds a [0, 1] image to the 8-bit grid (what a PNG round trip yields).
Portrait quantize8(const Portrait& img);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace aagn
