// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace aagn::metrics {

double psnr(const Portrait& a, const Portrait& b, double max_val) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", db);
  return buf;
}

namespace {

std::vector<double> luma(const Portrait& img, int n) {
  const std::size_t plane = img.shape().plane();
  std::vector<double> y(plane);
  const float* r = img.plane(n, 0);
  const float* g = img.plane(n, 1);
  const float* b = img.plane(n, 2);
  for (std::size_t p = 0; p < plane; ++p) {
    y[p] = 0.299 * r[p] + 0.587 * g[p] + 0.114 * b[p];
  }
  return y;
}

// Separable "valid" Gaussian filtering of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        acc += g[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * w + x + i)];
      }
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        acc += g[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      }
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Portrait& a, const Portrait& b, const SsimOptions& opt) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  check_portrait(a.shape(), "ssim");
  const Shape s = a.shape();
  if (opt.window < 1 || s.h < opt.window || s.w < opt.window) {
    throw ShapeError("ssim: image " + s.str() + " smaller than the " +
                     std::to_string(opt.window) + "x" + std::to_string(opt.window) + " window");
  }
  std::vector<double> g(static_cast<std::size_t>(opt.window));
  {
    const double c = (opt.window - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < opt.window; ++i) {
      g[static_cast<std::size_t>(i)] =
          std::exp(-(i - c) * (i - c) / (2.0 * opt.sigma * opt.sigma));
      total += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= total;
  }
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);

  double total = 0.0;
  std::size_t count = 0;
  for (int n = 0; n < s.n; ++n) {
    const auto x = luma(a, n);
    const auto y = luma(b, n);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t p = 0; p < x.size(); ++p) {
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, s.h, s.w, g);
    const auto my = filter_valid(y, s.h, s.w, g);
    const auto sxx = filter_valid(xx, s.h, s.w, g);
    const auto syy = filter_valid(yy, s.h, s.w, g);
    const auto sxy = filter_valid(xy, s.h, s.w, g);
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = sxx[p] - mx[p] * mx[p];
      const double vy = syy[p] - my[p] * my[p];
      const double cov = sxy[p] - mx[p] * my[p];
      total += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
               ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double perceptual_distance(const Portrait& a, const Portrait& b,
                           const objectives::PerceptualExtractor<float>& extractor) {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  const auto fa = extractor(ops::constant(a)).value();
  const auto fb = extractor(ops::constant(b)).value();
  double acc = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double d = static_cast<double>(fa[i]) - static_cast<double>(fb[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(fa.size()));
}

double epe(const FlowField& f, const FlowField& g) {
  require_same_shape(f.shape(), g.shape(), "epe");
  check_flow(f.shape(), "epe");
  const Shape s = f.shape();
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const float* fx = f.plane(n, 0);
    const float* fy = f.plane(n, 1);
    const float* gx = g.plane(n, 0);
    const float* gy = g.plane(n, 1);
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const double dx = static_cast<double>(fx[p]) - gx[p];
      const double dy = static_cast<double>(fy[p]) - gy[p];
      acc += std::sqrt(dx * dx + dy * dy);
    }
  }
  return acc / static_cast<double>(s.n * s.plane());
}

}  // namespace aagn::metrics
