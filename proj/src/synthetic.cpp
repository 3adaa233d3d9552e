// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "aagn/nn.hpp"
#include "aagn/warp.hpp"

namespace aagn::synthetic {

namespace {

// Figure proportions relative to the figure height unit.
constexpr double kMaxUnit = 0.84;
constexpr double kMaxTorsoRadius = 0.10;
// Softmin temperature over normalised capsule distances.
constexpr double kBlendTau = 0.25;

using Rgb = std::array<double, 3>;

struct Canvas {
  int size;
  std::vector<Rgb> px;
  Rgb& at(int y, int x) { return px[static_cast<std::size_t>(y * size + x)]; }
};

double segment_distance(double px, double py, const Capsule& c, double& qx, double& qy) {
  const double dx = c.bx - c.ax;
  const double dy = c.by - c.ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - c.ax) * dx + (py - c.ay) * dy) / len2, 0.0, 1.0);
  qx = c.ax + t * dx;
  qy = c.ay + t * dy;
  return std::hypot(px - qx, py - qy);
}

// Anti-aliased capsule with a mild radial shade.
void draw_capsule(Canvas& cv, const Capsule& c, const Rgb& colour) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(c.ax, c.bx) - c.radius - 1)));
  const int x1 =
      std::min(cv.size - 1, static_cast<int>(std::ceil(std::max(c.ax, c.bx) + c.radius + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(c.ay, c.by) - c.radius - 1)));
  const int y1 =
      std::min(cv.size - 1, static_cast<int>(std::ceil(std::max(c.ay, c.by) + c.radius + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double qx, qy;
      const double d = segment_distance(x, y, c, qx, qy);
      const double cov = std::clamp(c.radius + 0.5 - d, 0.0, 1.0);
      if (cov <= 0.0) continue;
      const double shade = 1.0 - 0.2 * std::min(1.0, d / c.radius);
      Rgb& p = cv.at(y, x);
      for (int k = 0; k < 3; ++k) {
        p[static_cast<std::size_t>(k)] = (1.0 - cov) * p[static_cast<std::size_t>(k)] +
                                         cov * colour[static_cast<std::size_t>(k)] * shade;
      }
    }
  }
}

Rgb random_colour(Rng& rng, const Rgb& avoid) {
  Rgb c{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const double diff = (std::abs(c[0] - avoid[0]) + std::abs(c[1] - avoid[1]) +
                       std::abs(c[2] - avoid[2])) / 3.0;
  if (diff < 0.2) {
    for (std::size_t k = 0; k < 3; ++k) c[k] = 1.0 - avoid[k];
  }
  return c;
}

double bump(double u) { return u * std::exp(0.5 * (1.0 - u * u)); }

}  // namespace

double WarpSpec::flow_bound(int size) const {
  return slim_ratio * kMaxTorsoRadius * kMaxUnit * size + max_disp;
}

void WarpSpec::validate(int size, double generator_max_disp) const {
  if (grid < 2) throw ConfigError("warp spec grid must be at least 2");
  if (!(max_disp >= 0.0) || !(sigma > 0.0) || !(slim_ratio >= 0.0) || slim_ratio > 1.0) {
    throw ConfigError("warp spec needs max_disp >= 0, sigma > 0 and slim_ratio in [0, 1]");
  }
  if (flow_bound(size) > generator_max_disp) {
    throw ConfigError("warp spec flow bound " + std::to_string(flow_bound(size)) +
                      " px exceeds the generator max_disp " +
                      std::to_string(generator_max_disp));
  }
}

nlohmann::json WarpSpec::to_json() const {
  return {{"grid", grid},
          {"max_disp", max_disp},
          {"sigma", sigma},
          {"seed", seed},
          {"slim_ratio", slim_ratio}};
}

WarpSpec WarpSpec::from_json(const nlohmann::json& j) {
  WarpSpec s;
  s.grid = j.value("grid", s.grid);
  s.max_disp = j.value("max_disp", s.max_disp);
  s.sigma = j.value("sigma", s.sigma);
  s.seed = j.value("seed", s.seed);
  s.slim_ratio = j.value("slim_ratio", s.slim_ratio);
  return s;
}

Figure gen_portrait(std::uint64_t seed, int size) {
  if (size < 16) throw ShapeError("gen_portrait: size must be at least 16");
  Rng rng(mix_seed(seed, 0));
  const double S = size;

  // Background: base colour, two oriented waves per channel, pixel noise.
  Canvas cv{size, std::vector<Rgb>(static_cast<std::size_t>(size * size))};
  const Rgb bg{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
  std::array<std::array<double, 4>, 6> waves{};
  for (auto& wv : waves) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(0.1, 0.6);
    wv = {freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 6.283),
          rng.uniform(0.02, 0.07)};
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Rgb& p = cv.at(y, x);
      for (std::size_t k = 0; k < 3; ++k) {
        double v = bg[k];
        for (std::size_t i = 0; i < 2; ++i) {
          const auto& wv = waves[k * 2 + i];
          v += wv[3] * std::sin(wv[0] * x + wv[1] * y + wv[2]);
        }
        p[k] = v + rng.uniform(-0.03, 0.03);
      }
    }
  }

  // Pose.
  const double u = S * rng.uniform(0.78, kMaxUnit);
  const double top = S * rng.uniform(0.04, 0.08);
  const double cx = S * rng.uniform(0.42, 0.58);
  const double neck_y = top + 0.16 * u;
  const double head_r = u * rng.uniform(0.055, 0.07);
  const double sw = u * rng.uniform(0.10, 0.14);
  const double hw = u * rng.uniform(0.06, 0.09);
  const double hip_y = neck_y + u * rng.uniform(0.28, 0.32);
  const double r_torso = u * rng.uniform(0.075, kMaxTorsoRadius);
  const double r_arm = u * rng.uniform(0.03, 0.045);
  const double r_leg = u * rng.uniform(0.04, 0.055);

  struct P {
    double x, y;
  };
  std::array<P, 14> j{};
  // Index order follows the standard joint names.
  j[0] = {cx + u * rng.uniform(-0.02, 0.02), top + 0.07 * u};
  j[1] = {cx, neck_y};
  const double sh_y = neck_y + 0.02 * u;
  j[2] = {cx - sw, sh_y};
  j[3] = {cx + sw, sh_y};
  for (int side = 0; side < 2; ++side) {
    const double dir = side == 0 ? -1.0 : 1.0;
    const P sh = j[static_cast<std::size_t>(2 + side)];
    const double phi = rng.uniform(0.15, 1.4);
    const double l1 = u * rng.uniform(0.14, 0.17);
    const P elbow{sh.x + dir * l1 * std::sin(phi), sh.y + l1 * std::cos(phi)};
    const double phi2 = phi + rng.uniform(-0.8, 0.8);
    const double l2 = u * rng.uniform(0.12, 0.15);
    j[static_cast<std::size_t>(4 + side)] = elbow;
    j[static_cast<std::size_t>(6 + side)] = {elbow.x + dir * l2 * std::sin(phi2),
                                             elbow.y + l2 * std::cos(phi2)};
    const P hip{cx + dir * hw, hip_y};
    const double th = rng.uniform(-0.25, 0.35);
    const double l3 = u * rng.uniform(0.19, 0.23);
    const P knee{hip.x + dir * l3 * std::sin(th), hip.y + l3 * std::cos(th)};
    const double th2 = rng.uniform(-0.2, 0.2);
    const double l4 = u * rng.uniform(0.19, 0.23);
    j[static_cast<std::size_t>(8 + side)] = hip;
    j[static_cast<std::size_t>(10 + side)] = knee;
    j[static_cast<std::size_t>(12 + side)] = {knee.x + dir * l4 * std::sin(th2),
                                              knee.y + l4 * std::cos(th2)};
  }
  for (auto& p : j) {
    p.x = std::clamp(p.x, kJointMargin, S - 1.0 - kJointMargin);
    p.y = std::clamp(p.y, kJointMargin, S - 1.0 - kJointMargin);
  }

  const Rgb skin = random_colour(rng, bg);
  const Rgb shirt = random_colour(rng, bg);
  const Rgb pants = random_colour(rng, bg);
  auto cap = [&](int a, int b, double r) {
    return Capsule{j[static_cast<std::size_t>(a)].x, j[static_cast<std::size_t>(a)].y,
                   j[static_cast<std::size_t>(b)].x, j[static_cast<std::size_t>(b)].y, r};
  };

  Figure fig;
  const Capsule spine{j[1].x, j[1].y, 0.5 * (j[8].x + j[9].x), 0.5 * (j[8].y + j[9].y), r_torso};
  const std::array<Capsule, 4> legs{cap(8, 10, r_leg), cap(10, 12, r_leg), cap(9, 11, r_leg),
                                    cap(11, 13, r_leg)};
  const std::array<Capsule, 4> arms{cap(2, 4, r_arm), cap(4, 6, r_arm), cap(3, 5, r_arm),
                                    cap(5, 7, r_arm)};
  for (const auto& c : legs) draw_capsule(cv, c, pants);
  draw_capsule(cv, cap(8, 9, r_leg), pants);
  draw_capsule(cv, spine, shirt);
  draw_capsule(cv, cap(2, 3, r_arm * 1.1), shirt);
  for (const auto& c : arms) draw_capsule(cv, c, skin);
  draw_capsule(cv, Capsule{j[0].x, j[0].y, j[0].x, j[0].y, head_r}, skin);

  fig.limbs.assign(arms.begin(), arms.end());
  fig.limbs.push_back(spine);
  fig.limbs.insert(fig.limbs.end(), legs.begin(), legs.end());

  Portrait img(Shape{1, 3, size, size});
  for (int c = 0; c < 3; ++c) {
    float* plane = img.plane(0, c);
    for (std::size_t p = 0; p < img.shape().plane(); ++p) {
      plane[p] = static_cast<float>(std::clamp(cv.px[p][static_cast<std::size_t>(c)], 0.0, 1.0));
    }
  }
  fig.image = quantize8(img);

  fig.kps.height = size;
  fig.kps.width = size;
  const auto& names = skeleton::standard_joint_names();
  for (std::size_t i = 0; i < j.size(); ++i) {
    fig.kps.joints.push_back({names[i], j[i].x, j[i].y, 1.0});
  }
  return fig;
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[static_cast<std::size_t>(i + radius)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

FlowField gen_flow(std::uint64_t seed, const WarpSpec& spec, int h, int w) {
  if (spec.grid < 2) throw ConfigError("gen_flow: grid must be at least 2");
  if (h <= 0 || w <= 0) throw ShapeError("gen_flow: size must be positive");
  FlowField flow(Shape{1, 2, h, w});
  if (spec.max_disp == 0.0) return flow;

  Rng rng(seed);
  const int g = spec.grid;
  std::vector<double> cx(static_cast<std::size_t>(g * g)), cy(cx.size());
  for (std::size_t i = 0; i < cx.size(); ++i) {
    // Uniform in the disk.
    const double r = spec.max_disp * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    cx[i] = r * std::cos(a);
    cy[i] = r * std::sin(a);
  }

  std::vector<double> fx(static_cast<std::size_t>(h * w)), fy(fx.size());
  for (int y = 0; y < h; ++y) {
    const double gy = h > 1 ? static_cast<double>(y) * (g - 1) / (h - 1) : 0.0;
    const int y0 = std::min(static_cast<int>(gy), g - 2);
    const double ty = gy - y0;
    for (int x = 0; x < w; ++x) {
      const double gx = w > 1 ? static_cast<double>(x) * (g - 1) / (w - 1) : 0.0;
      const int x0 = std::min(static_cast<int>(gx), g - 2);
      const double tx = gx - x0;
      auto lerp2 = [&](const std::vector<double>& c) {
        auto at = [&](int yy, int xx) { return c[static_cast<std::size_t>(yy * g + xx)]; };
        return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
               ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
      };
      fx[static_cast<std::size_t>(y * w + x)] = lerp2(cx);
      fy[static_cast<std::size_t>(y * w + x)] = lerp2(cy);
    }
  }

  const auto taps = gaussian_taps(spec.sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  auto blur = [&](std::vector<double>& f) {
    std::vector<double> tmp(f.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 f[static_cast<std::size_t>(y * w + reflect(x + k, w))];
        }
        tmp[static_cast<std::size_t>(y * w + x)] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 tmp[static_cast<std::size_t>(reflect(y + k, h) * w + x)];
        }
        f[static_cast<std::size_t>(y * w + x)] = acc;
      }
    }
  };
  blur(fx);
  blur(fy);
  for (std::size_t p = 0; p < fx.size(); ++p) {
    flow.plane(0, 0)[p] = static_cast<float>(fx[p]);
    flow.plane(0, 1)[p] = static_cast<float>(fy[p]);
  }
  return flow;
}

FlowField slimming_field(const std::vector<Capsule>& limbs, double slim_ratio, int h, int w) {
  FlowField flow(Shape{1, 2, h, w});
  if (slim_ratio == 0.0 || limbs.empty()) return flow;
  std::vector<double> ux(limbs.size()), vx(limbs.size()), vy(limbs.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double u_min = 1e300;
      for (std::size_t b = 0; b < limbs.size(); ++b) {
        double qx, qy;
        const double d = segment_distance(x, y, limbs[b], qx, qy);
        const double r = limbs[b].radius;
        ux[b] = d / r;
        u_min = std::min(u_min, ux[b]);
        if (d > 0.0) {
          const double mag = slim_ratio * r * bump(ux[b]) / d;
          vx[b] = mag * (x - qx);
          vy[b] = mag * (y - qy);
        } else {
          vx[b] = vy[b] = 0.0;
        }
      }
      double wsum = 0.0, sx = 0.0, sy = 0.0;
      for (std::size_t b = 0; b < limbs.size(); ++b) {
        const double wt = std::exp(-(ux[b] - u_min) / kBlendTau);
        wsum += wt;
        sx += wt * vx[b];
        sy += wt * vy[b];
      }
      flow.plane(0, 0)[y * w + x] = static_cast<float>(sx / wsum);
      flow.plane(0, 1)[y * w + x] = static_cast<float>(sy / wsum);
    }
  }
  return flow;
}

SyntheticSample make_sample(std::uint64_t seed, const WarpSpec& spec, int size) {
  Figure fig = gen_portrait(seed, size);
  FlowField flow = slimming_field(fig.limbs, spec.slim_ratio, size, size);
  const FlowField jitter = gen_flow(mix_seed(seed, spec.seed + 1), spec, size, size);
  for (std::size_t i = 0; i < flow.size(); ++i) flow[i] += jitter[i];
  SyntheticSample s;
  s.target = warp::backward_warp(fig.image, flow);
  s.source = std::move(fig.image);
  s.kps = std::move(fig.kps);
  s.flow = std::move(flow);
  return s;
}

std::uint64_t sample_seed(std::uint64_t seed, int index) {
  return mix_seed(seed, static_cast<std::uint64_t>(index));
}

std::vector<SyntheticSample> make_dataset(std::uint64_t seed, int count, const WarpSpec& spec,
                                          int size) {
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(make_sample(sample_seed(seed, i), spec, size));
  return out;
}

namespace {

std::string stem(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, std::uint64_t seed, int count,
                   const WarpSpec& spec, int size) {
  if (count <= 0) throw ConfigError("dataset count must be positive");
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const auto s = make_sample(sample_seed(seed, i), spec, size);
    const std::string base = stem(i);
    save_png(dir / (base + "_src.png"), s.source);
    save_png(dir / (base + "_tgt.png"), s.target);
    s.kps.save(dir / (base + "_kps.json"));
    warp::write_flo1(dir / (base + "_flow.flo1"), s.flow);
  }
  nlohmann::json manifest{
      {"seed", seed}, {"count", count}, {"size", size}, {"spec", spec.to_json()}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest.json: " + std::string(e.what()));
  }
  const int count = manifest.value("count", 0);
  if (count <= 0) throw FormatError("manifest.json has no positive count");
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::string base = stem(i);
    SyntheticSample s;
    s.source = load_image(dir / (base + "_src.png"));
    s.kps = skeleton::KeypointSet::load(dir / (base + "_kps.json"));
    s.flow = warp::read_flo1(dir / (base + "_flow.flo1"));
    s.target = warp::backward_warp(s.source, s.flow);
    const Portrait stored = load_image(dir / (base + "_tgt.png"));
    if (!(quantize8(s.target) == stored)) {
      throw FormatError(base + "_tgt.png does not match the warped source");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace aagn::synthetic
