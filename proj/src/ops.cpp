// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace aagn::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Tensor<T>& grad_of(ag::Node<T>& self, std::size_t i) {
  return self.parents[i]->grad_buffer();
}

template <typename T>
bool wants(ag::Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F f, D dfdx_from_xy) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return ag::make_result<T>(std::move(out), {x}, [dfdx_from_xy](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
    }
  });
}

// Column buffer for one batch item: rows (c_in * k * k), cols (h_out * w_out).
template <typename T>
void im2col(const T* img, int c_in, int h, int w, int k, int stride, int pad, int h_out,
            int w_out, T* col) {
  const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
  for (int c = 0; c < c_in; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw_out;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + static_cast<std::size_t>(oy) * w_out;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + w_out, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int ix0 = kx - pad;
            int ox_lo = std::max(0, -ix0);
            int ox_hi = std::min(w_out, w - ix0);
            ox_hi = std::max(ox_hi, ox_lo);
            std::fill(row, row + ox_lo, T(0));
            std::copy(srow + ox_lo + ix0, srow + ox_hi + ix0, row + ox_lo);
            std::fill(row + ox_hi, row + w_out, T(0));
          } else {
            for (int ox = 0; ox < w_out; ++ox) {
              const int ix = ox * stride - pad + kx;
              row[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c_in, int h, int w, int k, int stride, int pad, int h_out,
                int w_out, T* img) {
  const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
  for (int c = 0; c < c_in; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw_out;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + static_cast<std::size_t>(oy) * w_out;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int ix0 = kx - pad;
            const int ox_lo = std::max(0, -ix0);
            const int ox_hi = std::min(w_out, w - ix0);
            for (int ox = ox_lo; ox < ox_hi; ++ox) drow[ox + ix0] += row[ox];
            continue;
          }
          for (int ox = 0; ox < w_out; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

struct BilinearTap {
  int i0;
  int i1;
  double f;  // weight of i1
};

// Source taps for resize_bilinear along one axis.
std::vector<BilinearTap> resize_taps(int in, int out) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = o * ratio;
    s = std::min(s, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return ag::make_result<T>(std::move(out), {a, b}, [](ag::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      auto& g = grad_of(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return ag::make_result<T>(std::move(out), {a, b}, [](ag::Node<T>& self) {
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return ag::make_result<T>(std::move(out), {a, b}, [](ag::Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return ag::make_result<T>(std::move(out), {a}, [s](ag::Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

template <typename T>
Var<T> affine(const Var<T>& x, T a, T b) {
  return unary(
      x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> log_clamped(const Var<T>& x, T eps) {
  const T lo = eps;
  const T hi = T(1) - eps;
  return unary(
      x, [lo, hi](T v) { return std::log(std::clamp(v, lo, hi)); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) / v : T(0); });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (bias.defined() && !(bias.shape() == Shape{1, ws.n, 1, 1})) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str());
  }
  const int k = ws.h;
  const int h_out = (xs.h + 2 * pad - k) / stride + 1;
  const int w_out = (xs.w + 2 * pad - k) / stride + 1;
  if (h_out <= 0 || w_out <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int c_out = ws.n;
  const int rows = xs.c * k * k;
  const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  Tensor<T> out(Shape{xs.n, c_out, h_out, w_out});
  ConstMatMap<T> wm(weight.value().data(), c_out, rows);
  AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows) * hw_out);
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x.value().plane(n, 0);
    if (!pointwise) {
      im2col(src, xs.c, xs.h, xs.w, k, stride, pad, h_out, w_out, col.data());
      src = col.data();
    }
    ConstMatMap<T> cm(src, rows, static_cast<Eigen::Index>(hw_out));
    MatMap<T> om(out.plane(n, 0), c_out, static_cast<Eigen::Index>(hw_out));
    om.noalias() = wm * cm;
    if (bias.defined()) {
      for (int c = 0; c < c_out; ++c) om.row(c).array() += bias.value()[static_cast<std::size_t>(c)];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return ag::make_result<T>(
      std::move(out), inputs,
      [xs, k, stride, pad, h_out, w_out, c_out, rows, hw_out, pointwise,
       has_bias](ag::Node<T>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        const bool gx_on = wants(self, 0);
        const bool gw_on = wants(self, 1);
        const bool gb_on = has_bias && wants(self, 2);
        ConstMatMap<T> wm(wv.data(), c_out, rows);
        AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows) * hw_out);
        AlignedVector<T> dcol(pointwise ? 0 : static_cast<std::size_t>(rows) * hw_out);
        for (int n = 0; n < xs.n; ++n) {
          ConstMatMap<T> gm(self.grad.plane(n, 0), c_out, static_cast<Eigen::Index>(hw_out));
          if (gw_on) {
            const T* src = xv.plane(n, 0);
            if (!pointwise) {
              im2col(src, xs.c, xs.h, xs.w, k, stride, pad, h_out, w_out, col.data());
              src = col.data();
            }
            ConstMatMap<T> cm(src, rows, static_cast<Eigen::Index>(hw_out));
            MatMap<T> gwm(grad_of(self, 1).data(), c_out, rows);
            gwm.noalias() += gm * cm.transpose();
          }
          if (gb_on) {
            auto& gb = grad_of(self, 2);
            for (int c = 0; c < c_out; ++c) gb[static_cast<std::size_t>(c)] += gm.row(c).sum();
          }
          if (gx_on) {
            auto& gx = grad_of(self, 0);
            if (pointwise) {
              MatMap<T> gxm(gx.plane(n, 0), rows, static_cast<Eigen::Index>(hw_out));
              gxm.noalias() += wm.transpose() * gm;
            } else {
              MatMap<T> dcm(dcol.data(), rows, static_cast<Eigen::Index>(hw_out));
              dcm.noalias() = wm.transpose() * gm;
              col2im_add(dcol.data(), xs.c, xs.h, xs.w, k, stride, pad, h_out, w_out,
                         gx.plane(n, 0));
            }
          }
        }
      });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  const Shape xs = x.shape();
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: non-positive target size");
  auto ty = resize_taps(xs.h, out_h);
  auto tx = resize_taps(xs.w, out_w);
  Tensor<T> out(Shape{xs.n, xs.c, out_h, out_w});
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T fy = static_cast<T>(a.f);
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T fx = static_cast<T>(b.f);
          // Lerp form keeps constant fields exact.
          const T s00 = src[a.i0 * xs.w + b.i0];
          const T s01 = src[a.i0 * xs.w + b.i1];
          const T s10 = src[a.i1 * xs.w + b.i0];
          const T s11 = src[a.i1 * xs.w + b.i1];
          const T top = s00 + fx * (s01 - s00);
          const T bot = s10 + fx * (s11 - s10);
          dst[oy * out_w + ox] = top + fy * (bot - top);
        }
      }
    }
  }
  return ag::make_result<T>(std::move(out), {x}, [xs, out_h, out_w, ty, tx](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = gx.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
          const auto& a = ty[static_cast<std::size_t>(oy)];
          const T fy = static_cast<T>(a.f);
          for (int ox = 0; ox < out_w; ++ox) {
            const auto& b = tx[static_cast<std::size_t>(ox)];
            const T fx = static_cast<T>(b.f);
            const T v = g[oy * out_w + ox];
            d[a.i0 * xs.w + b.i0] += v * (T(1) - fy) * (T(1) - fx);
            d[a.i0 * xs.w + b.i1] += v * (T(1) - fy) * fx;
            d[a.i1 * xs.w + b.i0] += v * fy * (T(1) - fx);
            d[a.i1 * xs.w + b.i1] += v * fy * fx;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> avg_pool(const Var<T>& x, int k) {
  const Shape xs = x.shape();
  if (k <= 0 || xs.h % k != 0 || xs.w % k != 0) {
    throw ShapeError("avg_pool: size " + xs.str() + " not divisible by " + std::to_string(k));
  }
  const int ho = xs.h / k;
  const int wo = xs.w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < ho; ++y) {
        for (int xx = 0; xx < wo; ++xx) {
          T acc = T(0);
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) acc += src[(y * k + dy) * xs.w + xx * k + dx];
          }
          dst[y * wo + xx] = acc * inv;
        }
      }
    }
  }
  return ag::make_result<T>(std::move(out), {x}, [xs, k, ho, wo, inv](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = gx.plane(n, c);
        for (int y = 0; y < ho; ++y) {
          for (int xx = 0; xx < wo; ++xx) {
            const T v = g[y * wo + xx] * inv;
            for (int dy = 0; dy < k; ++dy) {
              for (int dx = 0; dx < k; ++dx) d[(y * k + dy) * xs.w + xx * k + dx] += v;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape s0 = xs.front().shape();
  int total = 0;
  for (const auto& x : xs) {
    const Shape s = x.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: " + s.str() + " vs " + s0.str());
    }
    total += s.c;
  }
  Tensor<T> out(Shape{s0.n, total, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    int off = 0;
    for (const auto& x : xs) {
      const T* src = x.value().plane(n, 0);
      std::copy(src, src + plane * x.shape().c, out.plane(n, off));
      off += x.shape().c;
    }
  }
  return ag::make_result<T>(std::move(out), xs, [plane, n_batch = s0.n](ag::Node<T>& self) {
    for (int nb = 0; nb < n_batch; ++nb) {
      int off = 0;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        const int c = self.parents[p]->value.shape().c;
        if (self.parents[p]->requires_grad) {
          const T* g = self.grad.plane(nb, off);
          T* d = self.parents[p]->grad_buffer().plane(nb, 0);
          for (std::size_t i = 0; i < plane * c; ++i) d[i] += g[i];
        }
        off += c;
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape xs = x.shape();
  if (begin < 0 || count <= 0 || begin + count > xs.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") out of " + xs.str());
  }
  Tensor<T> out(Shape{xs.n, count, xs.h, xs.w});
  const std::size_t len = xs.plane() * count;
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x.value().plane(n, begin);
    std::copy(src, src + len, out.plane(n, 0));
  }
  return ag::make_result<T>(std::move(out), {x}, [xs, begin, len](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n) {
      const T* g = self.grad.plane(n, 0);
      T* d = gx.plane(n, begin);
      for (std::size_t i = 0; i < len; ++i) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  const Shape xs = x.shape();
  const int hw = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, 1, hw, xs.c});
  for (int n = 0; n < xs.n; ++n) {
    ConstMatMap<T> src(x.value().plane(n, 0), xs.c, hw);
    MatMap<T> dst(out.plane(n, 0), hw, xs.c);
    dst = src.transpose();
  }
  return ag::make_result<T>(std::move(out), {x}, [xs, hw](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> g(self.grad.plane(n, 0), hw, xs.c);
      MatMap<T> d(gx.plane(n, 0), xs.c, hw);
      d += g.transpose();
    }
  });
}

template <typename T>
Var<T> from_tokens(const Var<T>& tokens, int h, int w) {
  const Shape ts = tokens.shape();
  if (ts.c != 1 || ts.h != h * w) {
    throw ShapeError("from_tokens: " + ts.str() + " cannot be viewed as " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  const int c = ts.w;
  const int hw = h * w;
  Tensor<T> out(Shape{ts.n, c, h, w});
  for (int n = 0; n < ts.n; ++n) {
    ConstMatMap<T> src(tokens.value().plane(n, 0), hw, c);
    MatMap<T> dst(out.plane(n, 0), c, hw);
    dst = src.transpose();
  }
  return ag::make_result<T>(std::move(out), {tokens}, [ts, c, hw](ag::Node<T>& self) {
    auto& gt = grad_of(self, 0);
    for (int n = 0; n < ts.n; ++n) {
      ConstMatMap<T> g(self.grad.plane(n, 0), c, hw);
      MatMap<T> d(gt.plane(n, 0), hw, c);
      d += g.transpose();
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a, bool transpose_b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.c != 1 || bs.c != 1 || as.n != bs.n) {
    throw ShapeError("matmul: operands must be (n,1,r,c), got " + as.str() + " and " + bs.str());
  }
  const int m = transpose_a ? as.w : as.h;
  const int ka = transpose_a ? as.h : as.w;
  const int kb = transpose_b ? bs.w : bs.h;
  const int p = transpose_b ? bs.h : bs.w;
  if (ka != kb) throw ShapeError("matmul: inner dims " + as.str() + " x " + bs.str());
  Tensor<T> out(Shape{as.n, 1, m, p});
  for (int n = 0; n < as.n; ++n) {
    ConstMatMap<T> am(a.value().plane(n, 0), as.h, as.w);
    ConstMatMap<T> bm(b.value().plane(n, 0), bs.h, bs.w);
    MatMap<T> om(out.plane(n, 0), m, p);
    if (transpose_a && transpose_b) om.noalias() = am.transpose() * bm.transpose();
    else if (transpose_a) om.noalias() = am.transpose() * bm;
    else if (transpose_b) om.noalias() = am * bm.transpose();
    else om.noalias() = am * bm;
  }
  return ag::make_result<T>(
      std::move(out), {a, b}, [as, bs, m, p, transpose_a, transpose_b](ag::Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        for (int n = 0; n < as.n; ++n) {
          ConstMatMap<T> g(self.grad.plane(n, 0), m, p);
          ConstMatMap<T> am(av.plane(n, 0), as.h, as.w);
          ConstMatMap<T> bm(bv.plane(n, 0), bs.h, bs.w);
          // With A' = op(A), B' = op(B): dA' = G B'^T, dB' = A'^T G.
          if (wants(self, 0)) {
            MatMap<T> ga(grad_of(self, 0).plane(n, 0), as.h, as.w);
            if (!transpose_a) {
              if (transpose_b) ga.noalias() += g * bm;
              else ga.noalias() += g * bm.transpose();
            } else {
              if (transpose_b) ga.noalias() += bm.transpose() * g.transpose();
              else ga.noalias() += bm * g.transpose();
            }
          }
          if (wants(self, 1)) {
            MatMap<T> gb(grad_of(self, 1).plane(n, 0), bs.h, bs.w);
            if (!transpose_b) {
              if (transpose_a) gb.noalias() += am * g;
              else gb.noalias() += am.transpose() * g;
            } else {
              if (transpose_a) gb.noalias() += g.transpose() * am.transpose();
              else gb.noalias() += g.transpose() * am;
            }
          }
        }
      });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  const Shape xs = x.shape();
  const std::size_t rows = static_cast<std::size_t>(xs.n) * xs.c * xs.h;
  const int cols = xs.w;
  Tensor<T> out(xs);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x.value().data() + r * cols;
    T* dst = out.data() + r * cols;
    const T mx = *std::max_element(src, src + cols);
    T total = T(0);
    for (int j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (int j = 0; j < cols; ++j) dst[j] /= total;
  }
  return ag::make_result<T>(std::move(out), {x}, [rows, cols](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T dot = T(0);
      for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
      T* d = gx.data() + r * cols;
      for (int j = 0; j < cols; ++j) d[j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Var<T> spatial_max(const Var<T>& x) {
  const Shape xs = x.shape();
  const std::size_t plane = xs.plane();
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  std::vector<std::size_t> arg(static_cast<std::size_t>(xs.n) * xs.c);
  for (std::size_t i = 0; i < arg.size(); ++i) {
    const T* src = x.value().data() + i * plane;
    const auto it = std::max_element(src, src + plane);
    arg[i] = static_cast<std::size_t>(it - src);
    out[i] = *it;
  }
  return ag::make_result<T>(std::move(out), {x}, [arg, plane](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) gx[i * plane + arg[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> spatial_mean(const Var<T>& x) {
  const Shape xs = x.shape();
  const std::size_t plane = xs.plane();
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Mean of deviations from the first entry: exact on constant planes.
    const T* src = x.value().data() + i * plane;
    const T ref = src[0];
    T acc = T(0);
    for (std::size_t j = 0; j < plane; ++j) acc += src[j] - ref;
    out[i] = ref + acc / static_cast<T>(plane);
  }
  return ag::make_result<T>(std::move(out), {x}, [plane](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const T v = self.grad[i] * inv;
      for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] += v;
    }
  });
}

template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& g) {
  const Shape xs = x.shape();
  if (!(g.shape() == Shape{xs.n, xs.c, 1, 1})) {
    throw ShapeError("channel_scale: gate " + g.shape().str() + " for input " + xs.str());
  }
  const std::size_t plane = xs.plane();
  Tensor<T> out(xs);
  for (std::size_t i = 0; i < g.value().size(); ++i) {
    const T s = g.value()[i];
    for (std::size_t j = 0; j < plane; ++j) out[i * plane + j] = x.value()[i * plane + j] * s;
  }
  return ag::make_result<T>(std::move(out), {x, g}, [plane](ag::Node<T>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& gv = self.parents[1]->value;
    const std::size_t channels = gv.size();
    if (wants(self, 0)) {
      auto& gx = grad_of(self, 0);
      for (std::size_t i = 0; i < channels; ++i) {
        for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] += self.grad[i * plane + j] * gv[i];
      }
    }
    if (wants(self, 1)) {
      auto& gg = grad_of(self, 1);
      for (std::size_t i = 0; i < channels; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < plane; ++j) acc += self.grad[i * plane + j] * xv[i * plane + j];
        gg[i] += acc;
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().values()) acc += v;
  return ag::make_result<T>(Tensor<T>(Shape{}, acc), {x}, [](ag::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    const T g = self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const std::size_t count = a.value().size();
  T acc = T(0);
  for (std::size_t i = 0; i < count; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  acc /= static_cast<T>(count);
  return ag::make_result<T>(Tensor<T>(Shape{}, acc), {a, b}, [count](ag::Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const T k = T(2) * self.grad[0] / static_cast<T>(count);
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < count; ++i) g[i] += k * (av[i] - bv[i]);
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < count; ++i) g[i] -= k * (av[i] - bv[i]);
    }
  });
}

#define AAGN_INSTANTIATE_OPS(T)                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                   \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                   \
  template Var<T> scale(const Var<T>&, T);                                             \
  template Var<T> affine(const Var<T>&, T, T);                                         \
  template Var<T> relu(const Var<T>&);                                                 \
  template Var<T> leaky_relu(const Var<T>&, T);                                        \
  template Var<T> tanh(const Var<T>&);                                                 \
  template Var<T> sigmoid(const Var<T>&);                                              \
  template Var<T> log_clamped(const Var<T>&, T);                                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);       \
  template Var<T> resize_bilinear(const Var<T>&, int, int);                            \
  template Var<T> avg_pool(const Var<T>&, int);                                        \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                         \
  template Var<T> slice_channels(const Var<T>&, int, int);                             \
  template Var<T> to_tokens(const Var<T>&);                                            \
  template Var<T> from_tokens(const Var<T>&, int, int);                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                    \
  template Var<T> softmax_rows(const Var<T>&);                                         \
  template Var<T> spatial_max(const Var<T>&);                                          \
  template Var<T> spatial_mean(const Var<T>&);                                         \
  template Var<T> channel_scale(const Var<T>&, const Var<T>&);                         \
  template Var<T> sum(const Var<T>&);                                                  \
  template Var<T> mean(const Var<T>&);                                                 \
  template Var<T> mse(const Var<T>&, const Var<T>&);

AAGN_INSTANTIATE_OPS(float)
AAGN_INSTANTIATE_OPS(double)

}  // namespace aagn::ops
