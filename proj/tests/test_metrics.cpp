#include "helpers.hpp"

#include "aagn/metrics.hpp"

using namespace aagn;

namespace {

Portrait constant_image(int h, int w, float v) { return Portrait(Shape{1, 3, h, w}, v); }

// Direct sliding-window SSIM with 2-D Gaussian weights, everything in double.
double ssim_oracle(const Portrait& a, const Portrait& b) {
  const int h = a.shape().h, w = a.shape().w, win = 11;
  std::vector<double> g(win);
  double gs = 0;
  for (int i = 0; i < win; ++i) gs += (g[static_cast<std::size_t>(i)] = std::exp(-((i - 5.0) * (i - 5.0)) / (2 * 1.5 * 1.5)));
  for (auto& v : g) v /= gs;
  auto luma = [](const Portrait& p, int y, int x) {
    return 0.299 * p.at(0, 0, y, x) + 0.587 * p.at(0, 1, y, x) + 0.114 * p.at(0, 2, y, x);
  };
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int y0 = 0; y0 + win <= h; ++y0)
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
          const double va = luma(a, y0 + i, x0 + j), vb = luma(b, y0 + i, x0 + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("psnr") {
  Rng rng(1);
  const auto a = testutil::random_tensor<float>(Shape{1, 3, 8, 8}, rng, 0.0, 0.5);
  Portrait b = a;
  // Offset chosen so that float rounding leaves every difference at exactly 16/255.
  for (auto& v : b.values()) v = static_cast<float>(v + 16.0 / 255.0);
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (double(b[i]) - a[i]) * (double(b[i]) - a[i]);
  mse /= a.size();
  CHECK(std::abs(metrics::psnr(a, b) - 10 * std::log10(1.0 / mse)) <= 1e-9);
  const auto c = constant_image(4, 4, 0.25f), d = constant_image(4, 4, 0.25f + 0.0625f);
  CHECK(std::abs(metrics::psnr(c, d) - 20 * std::log10(16.0)) <= 1e-6);
  Portrait off(Shape{1, 3, 4, 4}, 0.0f), on(Shape{1, 3, 4, 4}, static_cast<float>(16.0 / 255.0));
  const double expect = 20 * std::log10(255.0 / 16.0);
  CHECK(std::abs(metrics::psnr(off, on) - expect) <= 1e-6);
  CHECK(expect == doctest::Approx(24.0486).epsilon(1e-5));
  CHECK(std::isinf(metrics::psnr(a, a)));
  CHECK(metrics::format_psnr(metrics::psnr(a, a)) == "inf");
  CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
  CHECK_THROWS_AS(metrics::psnr(a, constant_image(8, 7, 0)), ShapeError);
}

TEST_CASE("ssim identities and the constant-image closed form") {
  Rng rng(2);
  const auto a = testutil::random_tensor<float>(Shape{2, 3, 20, 24}, rng, 0, 1);
  CHECK(std::abs(metrics::ssim(a, a) - 1.0) <= 1e-9);
  const double closed = (0.32 + 1e-4) / (0.68 + 1e-4);
  CHECK(std::abs(metrics::ssim(constant_image(16, 16, 0.2f), constant_image(16, 16, 0.8f)) - closed) <= 1e-6);
  CHECK(closed == doctest::Approx(0.47073).epsilon(1e-4));
  const auto b = testutil::random_tensor<float>(Shape{2, 3, 20, 24}, rng, 0, 1);
  CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-14));
  CHECK_THROWS_AS(metrics::ssim(constant_image(10, 16, 0), constant_image(10, 16, 0)), ShapeError);
}

TEST_CASE("ssim matches the brute-force window oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = testutil::random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 1);
    auto b = a;
    for (auto& v : b.values()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.3, 0.3)), 0.0f, 1.0f);
    CHECK(std::abs(metrics::ssim(a, b) - ssim_oracle(a, b)) <= 1e-6);
  }
}

TEST_CASE("ssim is nearly invariant to a joint offset") {
  Rng rng(4);
  const auto a = testutil::random_tensor<float>(Shape{1, 3, 24, 24}, rng, 0, 0.8);
  auto b = a;
  for (auto& v : b.values()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.1, 0.1)), 0.0f, 1.0f);
  auto a2 = a, b2 = b;
  for (auto& v : a2.values()) v += 0.1f;
  for (auto& v : b2.values()) v += 0.1f;
  CHECK(std::abs(metrics::ssim(a, b) - metrics::ssim(a2, b2)) < 1e-3);
}

TEST_CASE("perceptual distance is a metric") {
  const objectives::PerceptualExtractor<float> ex;
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = testutil::random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 1);
    const auto b = testutil::random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 1);
    const auto c = testutil::random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 1);
    CHECK(metrics::perceptual_distance(a, a, ex) == 0.0);
    const double ab = metrics::perceptual_distance(a, b, ex);
    CHECK(ab == metrics::perceptual_distance(b, a, ex));
    CHECK(ab > 0.0);
    CHECK(ab <= metrics::perceptual_distance(a, c, ex) + metrics::perceptual_distance(c, b, ex) + 1e-9);
  }
}

TEST_CASE("endpoint error") {
  FlowField f(Shape{1, 2, 5, 5}), g(Shape{1, 2, 5, 5});
  std::fill(f.plane(0, 0), f.plane(0, 0) + 25, 3.0f);
  std::fill(f.plane(0, 1), f.plane(0, 1) + 25, 4.0f);
  CHECK(metrics::epe(f, g) == 5.0);
  CHECK(metrics::epe(f, f) == 0.0);
  Rng rng(6);
  const auto a = testutil::random_tensor<float>(Shape{2, 2, 6, 6}, rng, -4, 4);
  const auto b = testutil::random_tensor<float>(Shape{2, 2, 6, 6}, rng, -4, 4);
  auto a2 = a, b2 = b;
  for (auto& v : a2.values()) v *= 2;
  for (auto& v : b2.values()) v *= 2;
  CHECK(metrics::epe(a2, b2) == doctest::Approx(2 * metrics::epe(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS(metrics::epe(a, FlowField(Shape{2, 2, 6, 5})), ShapeError);
}
