#include "helpers.hpp"

#include "aagn/objectives.hpp"

using namespace aagn;
using namespace aagn::objectives;
using V = ag::Var<double>;

namespace {

V full(Shape s, double v) { return V(Tensor<double>(s, v)); }
V scalar(double v) { return full(Shape{1, 1, 1, 1}, v); }

}  // namespace

TEST_CASE("flow loss") {
  Rng rng(1);
  const V a(testutil::random_tensor(Shape{2, 2, 5, 6}, rng));
  const V b(testutil::random_tensor(Shape{2, 2, 5, 6}, rng));
  CHECK(flow_loss(a, a).value()[0] == 0.0);
  Tensor<double> t(Shape{1, 2, 4, 4});
  std::fill(t.plane(0, 0), t.plane(0, 0) + 16, 1.0);
  CHECK(flow_loss(V(t), full(Shape{1, 2, 4, 4}, 0.0)).value()[0] == 0.5);
  CHECK(flow_loss(a, b).value()[0] == flow_loss(b, a).value()[0]);
  CHECK_THROWS_AS(flow_loss(a, full(Shape{2, 2, 5, 5}, 0.0)), ShapeError);
}

TEST_CASE("image loss") {
  Rng rng(2);
  const V a(testutil::random_tensor(Shape{1, 3, 6, 6}, rng, 0, 1));
  const V b(testutil::random_tensor(Shape{1, 3, 6, 6}, rng, 0, 1));
  CHECK(img_loss(a, a).value()[0] == 0.0);
  CHECK(img_loss(full(Shape{1, 3, 6, 6}, 1.0), full(Shape{1, 3, 6, 6}, 0.0)).value()[0] == 1.0);
  const double base = img_loss(a, b).value()[0];
  const double scaled = img_loss(ops::scale(a, 3.0), ops::scale(b, 3.0)).value()[0];
  CHECK(scaled == doctest::Approx(9.0 * base).epsilon(1e-13));
}

TEST_CASE("perceptual loss") {
  Rng rng(3);
  const V a(testutil::random_tensor(Shape{2, 3, 16, 16}, rng, 0, 1));
  const V b(testutil::random_tensor(Shape{2, 3, 16, 16}, rng, 0, 1));
  const PerceptualExtractor<double> ex(2);
  CHECK(vgg_loss(a, a, ex).value()[0] == 0.0);
  CHECK(vgg_loss(a, b, ex).value()[0] > 0.0);
  const PerceptualExtractor<double> identity(0);
  CHECK(vgg_loss(a, b, identity).value()[0] == img_loss(a, b).value()[0]);
  // Frozen: the extractor exposes no trainable leaves.
  const auto f = ex(V(a.value(), true));
  CHECK(ex(a).value() == ex(a).value());
  CHECK(f.shape() == Shape{2, 16, 8, 8});
  CHECK_THROWS_AS(PerceptualExtractor<double>(5), ConfigError);
  CHECK_THROWS_AS(PerceptualExtractor<double>(-1), ConfigError);
  // Same seed gives the same features, a different seed does not.
  CHECK(PerceptualExtractor<double>(2, 9)(a).value() == PerceptualExtractor<double>(2, 9)(a).value());
  CHECK_FALSE(PerceptualExtractor<double>(2, 9)(a).value() == ex(a).value());
}

TEST_CASE("external perceptual weights") {
  Tensor<double> w(Shape{3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 2.0;
  const PerceptualExtractor<double> ex(1, {w}, {Tensor<double>(Shape{1, 3, 1, 1})}, {1});
  Rng rng(4);
  const V a(testutil::random_tensor(Shape{1, 3, 4, 4}, rng, 0, 1));
  const auto f = ex(a).value();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == 2.0 * a.value()[i]);  // relu of positives
}

TEST_CASE("discriminator loss") {
  const Shape s{4, 1, 1, 1};
  const double per_sample = adv_loss_d(full(s, 0.5), full(s, 0.5)).value()[0];
  CHECK(std::abs(per_sample - 2.0 * std::log(2.0)) <= 1e-9);
  CHECK(per_sample == doctest::Approx(1.3863).epsilon(1e-4));
  const double best = adv_loss_d(full(s, kProbEps), full(s, 1.0 - kProbEps)).value()[0];
  CHECK(best >= 0.0);
  CHECK(best < 1e-6);
  // Outside the clamp the loss stays finite.
  CHECK(std::isfinite(adv_loss_d(full(s, 1.0), full(s, 0.0)).value()[0]));
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const double f = rng.uniform(1e-6, 1 - 1e-6), r = rng.uniform(1e-6, 1 - 1e-6);
    CHECK(adv_loss_d(scalar(f), scalar(r)).value()[0] > 0.0);
  }
}

TEST_CASE("generator adversarial loss") {
  CHECK(std::abs(adv_loss_g(scalar(0.5)).value()[0] - std::log(2.0)) <= 1e-12);
  CHECK(adv_loss_g(scalar(1.0 - kProbEps)).value()[0] < 1e-6);
  double prev = 1e300;
  for (double d = 0.01; d < 1.0; d += 0.01) {
    const double v = adv_loss_g(scalar(d)).value()[0];
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("weighted total") {
  const LossWeights defaults;
  LossTerms<double> unit{scalar(1), scalar(1), scalar(1), scalar(1)};
  CHECK(std::abs(total_loss(unit, defaults).value()[0] - 1.007) <= 1e-12);
  LossTerms<double> zero{scalar(0), scalar(0), scalar(0), scalar(0)};
  CHECK(total_loss(zero, defaults).value()[0] == 0.0);

  LossWeights no_vgg = defaults;
  no_vgg.vgg = 0.0;
  LossTerms<double> big{scalar(0.3), scalar(0.7), scalar(1e6), scalar(2)};
  LossTerms<double> without{scalar(0.3), scalar(0.7), V(), scalar(2)};
  CHECK(total_loss(big, no_vgg).value()[0] == total_loss(without, defaults).value()[0]);

  // Linear in each component.
  auto with_flow = [&](double f) {
    return total_loss(LossTerms<double>{scalar(f), scalar(0.2), scalar(0.4), scalar(0.9)}, defaults)
        .value()[0];
  };
  CHECK(with_flow(3.0) - with_flow(1.0) == doctest::Approx(2.0 * defaults.flow).epsilon(1e-12));

  LossTerms<double> bad = unit;
  bad.vgg = scalar(std::numeric_limits<double>::infinity());
  try {
    (void)total_loss(bad, defaults);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("L_vgg") != std::string::npos);
  }
  LossTerms<double> nonscalar = unit;
  nonscalar.img = full(Shape{1, 1, 2, 1}, 1.0);
  CHECK_THROWS_AS(total_loss(nonscalar, defaults), ShapeError);
}

TEST_CASE("total loss gradient w.r.t. generator outputs") {
  Rng rng(6);
  const V flow_t(testutil::random_tensor(Shape{1, 2, 8, 8}, rng, -1, 1));
  const V img_t(testutil::random_tensor(Shape{1, 3, 8, 8}, rng, 0, 1));
  auto flow_p = testutil::random_leaf(Shape{1, 2, 8, 8}, rng, -1, 1);
  auto img_p = testutil::random_leaf(Shape{1, 3, 8, 8}, rng, 0, 1);
  const PerceptualExtractor<double> ex(2, 3);
  auto d_fake = testutil::random_leaf(Shape{1, 1, 1, 1}, rng, 0.2, 0.8);
  testutil::require_grads_match(testutil::grad_check(
      {{"flow", flow_p}, {"img", img_p}, {"d_fake", d_fake}}, [&] {
        LossTerms<double> t{flow_loss(flow_t, flow_p), img_loss(img_t, img_p),
                            vgg_loss(img_t, img_p, ex), adv_loss_g(d_fake)};
        return total_loss(t, LossWeights{});
      }));
}
