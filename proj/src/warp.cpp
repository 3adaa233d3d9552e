// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/warp.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace aagn::warp {

namespace {

struct Sample {
  int i0;
  int i1;
  bool clamped;
};

template <typename T>
Sample locate(T s, int size, T& frac) {
  bool clamped = false;
  if (s <= T(0)) {
    clamped = s < T(0);
    s = T(0);
  } else if (s >= T(size - 1)) {
    clamped = s > T(size - 1);
    s = T(size - 1);
  }
  const int i0 = static_cast<int>(std::floor(s));
  frac = s - static_cast<T>(i0);
  return {i0, std::min(i0 + 1, size - 1), clamped};
}

}  // namespace

template <typename T>
ag::Var<T> backward_warp(const ag::Var<T>& img, const ag::Var<T>& flow) {
  const Shape is = img.shape();
  const Shape fs = flow.shape();
  check_flow(fs, "backward_warp");
  if (is.n != fs.n || is.h != fs.h || is.w != fs.w) {
    throw ShapeError("backward_warp: image " + is.str() + " and flow " + fs.str() +
                     " differ in resolution");
  }
  Tensor<T> out(is);
  const auto& iv = img.value();
  const auto& fv = flow.value();
  for (int n = 0; n < is.n; ++n) {
    const T* fx_plane = fv.plane(n, 0);
    const T* fy_plane = fv.plane(n, 1);
    for (int y = 0; y < is.h; ++y) {
      for (int x = 0; x < is.w; ++x) {
        const int p = y * is.w + x;
        T ax, ay;
        const Sample sx = locate(static_cast<T>(x) + fx_plane[p], is.w, ax);
        const Sample sy = locate(static_cast<T>(y) + fy_plane[p], is.h, ay);
        for (int c = 0; c < is.c; ++c) {
          const T* src = iv.plane(n, c);
          const T s00 = src[sy.i0 * is.w + sx.i0];
          const T s01 = src[sy.i0 * is.w + sx.i1];
          const T s10 = src[sy.i1 * is.w + sx.i0];
          const T s11 = src[sy.i1 * is.w + sx.i1];
          const T top = s00 + ax * (s01 - s00);
          const T bot = s10 + ax * (s11 - s10);
          out.plane(n, c)[p] = top + ay * (bot - top);
        }
      }
    }
  }
  return ag::make_result<T>(std::move(out), {img, flow}, [is](ag::Node<T>& self) {
    const auto& iv = self.parents[0]->value;
    const auto& fv = self.parents[1]->value;
    const bool want_img = self.parents[0]->requires_grad;
    const bool want_flow = self.parents[1]->requires_grad;
    Tensor<T>* gi = want_img ? &self.parents[0]->grad_buffer() : nullptr;
    Tensor<T>* gf = want_flow ? &self.parents[1]->grad_buffer() : nullptr;
    for (int n = 0; n < is.n; ++n) {
      const T* fx_plane = fv.plane(n, 0);
      const T* fy_plane = fv.plane(n, 1);
      for (int y = 0; y < is.h; ++y) {
        for (int x = 0; x < is.w; ++x) {
          const int p = y * is.w + x;
          T ax, ay;
          const Sample sx = locate(static_cast<T>(x) + fx_plane[p], is.w, ax);
          const Sample sy = locate(static_cast<T>(y) + fy_plane[p], is.h, ay);
          T dfx = T(0), dfy = T(0);
          for (int c = 0; c < is.c; ++c) {
            const T g = self.grad.plane(n, c)[p];
            if (g == T(0)) continue;
            if (gi) {
              T* d = gi->plane(n, c);
              d[sy.i0 * is.w + sx.i0] += g * (T(1) - ay) * (T(1) - ax);
              d[sy.i0 * is.w + sx.i1] += g * (T(1) - ay) * ax;
              d[sy.i1 * is.w + sx.i0] += g * ay * (T(1) - ax);
              d[sy.i1 * is.w + sx.i1] += g * ay * ax;
            }
            if (gf) {
              const T* src = iv.plane(n, c);
              const T s00 = src[sy.i0 * is.w + sx.i0];
              const T s01 = src[sy.i0 * is.w + sx.i1];
              const T s10 = src[sy.i1 * is.w + sx.i0];
              const T s11 = src[sy.i1 * is.w + sx.i1];
              if (!sx.clamped) dfx += g * ((T(1) - ay) * (s01 - s00) + ay * (s11 - s10));
              if (!sy.clamped) {
                const T top = s00 + ax * (s01 - s00);
                const T bot = s10 + ax * (s11 - s10);
                dfy += g * (bot - top);
              }
            }
          }
          if (gf) {
            gf->plane(n, 0)[p] += dfx;
            gf->plane(n, 1)[p] += dfy;
          }
        }
      }
    }
  });
}

Portrait backward_warp(const Portrait& img, const FlowField& flow) {
  return backward_warp(ops::constant(img), ops::constant(flow)).value();
}

template <typename T>
ag::Var<T> upsample_flow(const ag::Var<T>& flow, double scale) {
  check_flow(flow.shape(), "upsample_flow");
  if (!(scale > 0.0)) throw RangeError("upsample_flow: scale must be positive");
  const double th = scale * flow.shape().h;
  const double tw = scale * flow.shape().w;
  if (th != std::round(th) || tw != std::round(tw)) {
    throw ShapeError("upsample_flow: scale " + std::to_string(scale) +
                     " does not give an integral size from " + flow.shape().str());
  }
  if (scale == 1.0) return flow;
  auto up = ops::resize_bilinear(flow, static_cast<int>(th), static_cast<int>(tw));
  return ops::scale(up, static_cast<T>(scale));
}

FlowField upsample_flow(const FlowField& flow, double scale) {
  return upsample_flow(ops::constant(flow), scale).value();
}

FlowField apply_strength(const FlowField& flow, double mu) {
  check_flow(flow.shape(), "apply_strength");
  if (!(std::abs(mu) <= 1.0)) {
    throw RangeError("strength mu must lie in [-1, 1], got " + std::to_string(mu));
  }
  FlowField out(flow.shape());
  const float m = static_cast<float>(mu);
  for (std::size_t i = 0; i < flow.size(); ++i) out[i] = flow[i] * m;
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "FLO1 I/O assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void write_flo1(const std::filesystem::path& path, const FlowField& flow) {
  check_flow(flow.shape(), "write_flo1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const auto h = static_cast<std::uint32_t>(flow.shape().h);
  const auto w = static_cast<std::uint32_t>(flow.shape().w);
  out.write("AAGN", 4);
  put_u32(out, h);
  put_u32(out, w);
  std::vector<float> interleaved(static_cast<std::size_t>(h) * w * 2);
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
    interleaved[2 * p] = flow.plane(0, 0)[p];
    interleaved[2 * p + 1] = flow.plane(0, 1)[p];
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!out) throw FormatError("short write to " + path.string());
}

FlowField read_flo1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open flow file " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), "AAGN", 4) != 0) {
    throw FormatError(path.string() + ": bad FLO1 magic");
  }
  const std::uint32_t h = get_u32(in);
  const std::uint32_t w = get_u32(in);
  if (!in || h == 0 || w == 0 || h > 65536 || w > 65536) {
    throw FormatError(path.string() + ": bad FLO1 dimensions");
  }
  std::vector<float> interleaved(static_cast<std::size_t>(h) * w * 2);
  in.read(reinterpret_cast<char*>(interleaved.data()),
          static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated FLO1 payload");
  FlowField flow(Shape{1, 2, static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
    flow.plane(0, 0)[p] = interleaved[2 * p];
    flow.plane(0, 1)[p] = interleaved[2 * p + 1];
  }
  return flow;
}

template ag::Var<float> backward_warp(const ag::Var<float>&, const ag::Var<float>&);
template ag::Var<double> backward_warp(const ag::Var<double>&, const ag::Var<double>&);
template ag::Var<float> upsample_flow(const ag::Var<float>&, double);
template ag::Var<double> upsample_flow(const ag::Var<double>&, double);

}  // namespace aagn::warp
