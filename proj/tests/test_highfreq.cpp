#include "helpers.hpp"

#include "aagn/highfreq.hpp"
#include "aagn/image_io.hpp"

using namespace aagn;

namespace {

Tensor<double> srm(const Tensor<double>& img) {
  return highfreq::srm_filter(ag::Var<double>(img)).value();
}

}  // namespace

TEST_CASE("kernel bank is zero-sum") {
  for (const auto& k : highfreq::srm_kernels()) {
    int s = 0;
    for (const auto& row : k.taps)
      for (int v : row) s += v;
    CHECK(s == 0);
  }
  CHECK(highfreq::srm_kernels()[0].divisor == 2);
  CHECK(highfreq::srm_kernels()[1].divisor == 4);
  CHECK(highfreq::srm_kernels()[2].divisor == 12);
  CHECK(highfreq::srm_kernels()[2].taps[2][2] == -12);
}

TEST_CASE("constant images give exactly zero") {
  Tensor<double> img(Shape{2, 3, 9, 11}, 0.37);
  const auto r = srm(img);
  CHECK(r.shape() == Shape{2, 3, 9, 11});
  CHECK(r.max_abs() == 0.0);
  CHECK(highfreq::srm_filter(Portrait(Shape{1, 3, 6, 6}, 0.8f)).max_abs() == 0.0f);
}

TEST_CASE("impulse response is the rotated kernel over its divisor") {
  Tensor<double> img(Shape{1, 3, 9, 9});
  for (int c = 0; c < 3; ++c) img.at(0, c, 4, 4) = 1.0;
  const auto r = srm(img);
  for (int k = 0; k < 3; ++k) {
    const auto& ker = highfreq::srm_kernels()[static_cast<std::size_t>(k)];
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) {
        const int dy = y - 4, dx = x - 4;
        double expect = 0.0;
        if (std::abs(dy) <= 2 && std::abs(dx) <= 2) {
          expect = static_cast<double>(ker.taps[static_cast<std::size_t>(2 - dy)][static_cast<std::size_t>(2 - dx)]) / ker.divisor;
        }
        CHECK(std::abs(r.at(0, k, y, x) - expect) <= 1e-12);
      }
  }
}

TEST_CASE("direct convolution oracle with reflect-101 padding") {
  Rng rng(5);
  const auto img = testutil::random_tensor<double>(Shape{1, 3, 7, 8}, rng, 0, 1);
  const auto r = srm(img);
  auto refl = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  for (int k = 0; k < 3; ++k) {
    const auto& ker = highfreq::srm_kernels()[static_cast<std::size_t>(k)];
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 8; ++x) {
        double acc = 0;
        for (int c = 0; c < 3; ++c)
          for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j)
              acc += ker.taps[static_cast<std::size_t>(i + 2)][static_cast<std::size_t>(j + 2)] *
                     img.at(0, c, refl(y + i, 7), refl(x + j, 8));
        CHECK(std::abs(r.at(0, k, y, x) - acc / ker.divisor / 3.0) <= 1e-12);
      }
  }
}

TEST_CASE("srm is linear") {
  Rng rng(9);
  const auto a = testutil::random_tensor<double>(Shape{1, 3, 8, 8}, rng);
  const auto b = testutil::random_tensor<double>(Shape{1, 3, 8, 8}, rng);
  Tensor<double> m(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) m[i] = 3.0 * a[i] + 0.25 * b[i];
  const auto ra = srm(a), rb = srm(b), rm = srm(m);
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(std::abs(rm[i] - (3.0 * ra[i] + 0.25 * rb[i])) <= 1e-12);
}

TEST_CASE("first-order kernel ignores vertical ramps; responses are bounded") {
  Tensor<double> img(Shape{1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) img.at(0, c, y, x) = 0.1 * y;
  const auto r = srm(img);
  for (std::size_t p = 0; p < r.shape().plane(); ++p) CHECK(r.plane(0, 0)[p] == 0.0);

  Rng rng(1);
  const auto x = testutil::random_tensor<double>(Shape{1, 3, 10, 10}, rng, 0, 1);
  const auto rx = srm(x);
  for (int k = 0; k < 3; ++k) {
    const auto& ker = highfreq::srm_kernels()[static_cast<std::size_t>(k)];
    double l1 = 0;
    for (const auto& row : ker.taps)
      for (int v : row) l1 += std::abs(v);
    for (std::size_t p = 0; p < rx.shape().plane(); ++p) CHECK(std::abs(rx.plane(0, k)[p]) <= l1 / ker.divisor);
  }
}

TEST_CASE("srm gradient and size guard") {
  Rng rng(4);
  auto x = testutil::random_leaf(Shape{1, 3, 6, 7}, rng);
  testutil::require_grads_match(testutil::grad_check(
      {{"x", x}}, [&] { return testutil::random_projection(highfreq::srm_filter(x), 2); }));
  CHECK_THROWS_AS(highfreq::srm_filter(Portrait(Shape{1, 3, 4, 9})), ShapeError);
  CHECK(highfreq::reflect_index(-1, 5) == 1);
  CHECK(highfreq::reflect_index(5, 5) == 3);
}
