// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>
#include <string>

#include "aagn/image_io.hpp"
#include "aagn/objectives.hpp"

namespace aagn::metrics {

/// 10 log10(max^2 / mse); +inf when the images are identical.
double psnr(const Portrait& a, const Portrait& b, double max_val = 1.0);

/// "inf" for the infinite sentinel, fixed-point decimal otherwise.
std::string format_psnr(double db);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 1.0;  // L
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean local SSIM over all fully contained Gaussian windows of the
/// BT.601 luma images, averaged over the batch.
double ssim(const Portrait& a, const Portrait& b, const SsimOptions& opt = {});

/// Root mean squared difference between extractor features; a metric on
/// feature space.
double perceptual_distance(const Portrait& a, const Portrait& b,
                           const objectives::PerceptualExtractor<float>& extractor);

/// Mean endpoint error in pixels.
double epe(const FlowField& f, const FlowField& g);

}  // namespace aagn::metrics
