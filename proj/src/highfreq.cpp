// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/highfreq.hpp"

#include <cstdio>

namespace aagn::highfreq {

const std::array<SrmKernel, 3>& srm_kernels() {
  static const std::array<SrmKernel, 3> kernels{{
      {{{{0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, {0, 1, -2, 1, 0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}}}, 2},
      {{{{0, 0, 0, 0, 0}, {0, -1, 2, -1, 0}, {0, 2, -4, 2, 0}, {0, -1, 2, -1, 0}, {0, 0, 0, 0, 0}}},
       4},
      {{{{-1, 2, -2, 2, -1},
         {2, -6, 8, -6, 2},
         {-2, 8, -12, 8, -2},
         {2, -6, 8, -6, 2},
         {-1, 2, -2, 2, -1}}},
       12},
  }};
  return kernels;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
ag::Var<T> srm_filter(const ag::Var<T>& img) {
  const Shape s = img.shape();
  check_portrait(s, "srm_filter");
  if (s.h < 5 || s.w < 5) throw ShapeError("srm_filter: image smaller than the 5x5 kernels");

  // Per-kernel tap weights with the divisor folded in.
  std::array<std::array<T, 25>, 3> weights{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& ker = srm_kernels()[k];
    for (int i = 0; i < 25; ++i) {
      weights[k][static_cast<std::size_t>(i)] =
          static_cast<T>(ker.taps[static_cast<std::size_t>(i / 5)][static_cast<std::size_t>(i % 5)]) /
          static_cast<T>(ker.divisor);
    }
  }
  std::vector<int> ry(static_cast<std::size_t>(s.h + 4)), rx(static_cast<std::size_t>(s.w + 4));
  for (int i = 0; i < s.h + 4; ++i) ry[static_cast<std::size_t>(i)] = reflect_index(i - 2, s.h);
  for (int i = 0; i < s.w + 4; ++i) rx[static_cast<std::size_t>(i)] = reflect_index(i - 2, s.w);

  Tensor<T> out(s);
  std::vector<T> gray(s.plane());
  for (int n = 0; n < s.n; ++n) {
    // Correlation is linear, so averaging colours first gives the same result.
    for (std::size_t p = 0; p < s.plane(); ++p) {
      gray[p] = (img.value().plane(n, 0)[p] + img.value().plane(n, 1)[p] +
                 img.value().plane(n, 2)[p]) /
                T(3);
    }
    for (int k = 0; k < 3; ++k) {
      T* dst = out.plane(n, k);
      const auto& wk = weights[static_cast<std::size_t>(k)];
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          // Zero-sum taps applied to differences from the centre pixel, so a
          // flat neighbourhood gives exactly zero.
          const T centre = gray[static_cast<std::size_t>(y * s.w + x)];
          T acc = T(0);
          for (int dy = 0; dy < 5; ++dy) {
            const int yy = ry[static_cast<std::size_t>(y + dy)];
            for (int dx = 0; dx < 5; ++dx) {
              const T wt = wk[static_cast<std::size_t>(dy * 5 + dx)];
              if (wt == T(0) || (dy == 2 && dx == 2)) continue;
              acc += wt * (gray[static_cast<std::size_t>(yy * s.w + rx[static_cast<std::size_t>(x + dx)])] - centre);
            }
          }
          dst[y * s.w + x] = acc;
        }
      }
    }
  }
  return ag::make_result<T>(std::move(out), {img}, [s, weights, ry, rx](ag::Node<T>& self) {
    auto& gi = self.parents[0]->grad_buffer();
    std::vector<T> ggray(s.plane());
    for (int n = 0; n < s.n; ++n) {
      std::fill(ggray.begin(), ggray.end(), T(0));
      for (int k = 0; k < 3; ++k) {
        const T* g = self.grad.plane(n, k);
        const auto& wk = weights[static_cast<std::size_t>(k)];
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            const T gv = g[y * s.w + x];
            for (int dy = 0; dy < 5; ++dy) {
              const int yy = ry[static_cast<std::size_t>(y + dy)];
              for (int dx = 0; dx < 5; ++dx) {
                const T wt = wk[static_cast<std::size_t>(dy * 5 + dx)];
                if (wt == T(0)) continue;
                ggray[static_cast<std::size_t>(yy * s.w + rx[static_cast<std::size_t>(x + dx)])] += wt * gv;
              }
            }
          }
        }
      }
      for (int c = 0; c < 3; ++c) {
        T* d = gi.plane(n, c);
        for (std::size_t p = 0; p < s.plane(); ++p) d[p] += ggray[p] / T(3);
      }
    }
  });
}

Tensor<float> srm_filter(const Portrait& img) { return srm_filter(ops::constant(img)).value(); }

void export_residual_pngs(const Tensor<float>& residuals, const std::filesystem::path& prefix,
                          float gain) {
  for (int k = 0; k < residuals.shape().c; ++k) {
    save_plane_png(prefix.string() + "_srm" + std::to_string(k) + ".png", residuals, 0, k, gain,
                   0.5f);
  }
}

template ag::Var<float> srm_filter(const ag::Var<float>&);
template ag::Var<double> srm_filter(const ag::Var<double>&);

}  // namespace aagn::highfreq
