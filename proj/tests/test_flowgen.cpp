#include "helpers.hpp"

#include "aagn/flow_generator.hpp"

using namespace aagn;
using namespace aagn::flowgen;
using V = ag::Var<double>;

namespace {

FgConfig tiny_config() {
  FgConfig cfg;
  cfg.channels = {8, 8};
  cfg.input_h = cfg.input_w = 16;
  cfg.inject_levels = {0, 1};
  cfg.max_disp = 3.0;
  cfg.head_gain = 1.0;
  return cfg;
}

struct Net {
  nn::ParamSet<double> params;
  std::unique_ptr<FlowGenerator<double>> fg;
  explicit Net(const FgConfig& cfg, std::uint64_t seed = 1) {
    Rng rng(seed);
    fg = std::make_unique<FlowGenerator<double>>(params, cfg, rng);
  }
};

struct Inputs {
  V portrait, skeleton, affinity;
};

Inputs random_inputs(int n, int size, int aff, std::uint64_t seed) {
  Rng rng(seed);
  return {V(testutil::random_tensor(Shape{n, 3, size, size}, rng, 0, 1)),
          V(testutil::random_tensor(Shape{n, 12, size, size}, rng, 0, 1)),
          V(testutil::random_tensor(Shape{n, 9, aff, aff}, rng, -1, 1))};
}

void zero_injections(Net& net) {
  for (auto& [name, v] : net.params.items()) {
    if (name.rfind("fg.inject", 0) == 0) v.mutable_value().fill(0.0);
  }
}

}  // namespace

TEST_CASE("injection adds the encoded affinity") {
  Rng rng(3);
  InjectionEncoder<double> enc;
  enc.mix.weight = V(testutil::random_tensor(Shape{6, 9, 1, 1}, rng));
  enc.mix.bias = V(testutil::random_tensor(Shape{1, 6, 1, 1}, rng));
  const V feat(testutil::random_tensor(Shape{2, 6, 8, 8}, rng));
  const V aff(testutil::random_tensor(Shape{2, 9, 4, 4}, rng));
  const auto out = inject_affinity(feat, aff, enc).value();
  const auto encoded = enc(aff, 8, 8).value();
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == feat.value()[i] + encoded[i]);

  // On a coarse dyadic grid every sum is exact, so the subtraction recovers enc(A) bit-exactly.
  auto dyadic = [&](Shape s) {
    Tensor<double> t(s);
    for (auto& v : t.values()) v = rng.uniform_int(-64, 64) / 64.0;
    return t;
  };
  InjectionEncoder<double> denc;
  denc.mix.weight = V(dyadic(Shape{6, 9, 1, 1}));
  denc.mix.bias = V(dyadic(Shape{1, 6, 1, 1}));
  const V dfeat(dyadic(Shape{2, 6, 8, 8}));
  const V daff(dyadic(Shape{2, 9, 8, 8}));
  const auto dout = inject_affinity(dfeat, daff, denc).value();
  const auto denc_out = denc(daff, 8, 8).value();
  for (std::size_t i = 0; i < dout.size(); ++i) CHECK(dout[i] - dfeat.value()[i] == denc_out[i]);

  InjectionEncoder<double> zero;
  zero.mix.weight = V(Tensor<double>(Shape{6, 9, 1, 1}));
  zero.mix.bias = V(Tensor<double>(Shape{1, 6, 1, 1}));
  CHECK(inject_affinity(feat, aff, zero).value() == feat.value());
  CHECK(inject_affinity(feat, V(Tensor<double>(Shape{2, 9, 4, 4})), zero).value() == feat.value());
  enc.mix.bias = V(Tensor<double>(Shape{1, 6, 1, 1}));
  CHECK(inject_affinity(feat, V(Tensor<double>(Shape{2, 9, 4, 4})), enc).value() == feat.value());

  InjectionEncoder<double> wrong;
  wrong.mix.weight = V(Tensor<double>(Shape{5, 9, 1, 1}));
  wrong.mix.bias = V(Tensor<double>(Shape{1, 5, 1, 1}));
  CHECK_THROWS_AS(inject_affinity(feat, aff, wrong), ShapeError);
}

TEST_CASE("default generator: shape, finiteness, determinism, bound") {
  Net net(FgConfig{}, 5);
  auto in = random_inputs(1, 64, 16, 2);
  const auto a = (*net.fg)(in.portrait, in.skeleton, in.affinity).value();
  CHECK(a.shape() == Shape{1, 2, 64, 64});
  CHECK(a.all_finite());
  CHECK(a.max_abs() <= 10.0);
  CHECK((*net.fg)(in.portrait, in.skeleton, in.affinity).value() == a);
}

TEST_CASE("flow magnitude never exceeds max_disp") {
  auto cfg = tiny_config();
  cfg.head_gain = 50.0;  // drive the squashing into saturation
  Net net(cfg, 9);
  for (std::uint64_t s = 0; s < 4; ++s) {
    auto in = random_inputs(2, 16, 4, s);
    CHECK((*net.fg)(in.portrait, in.skeleton, in.affinity).value().max_abs() <= cfg.max_disp);
  }
}

TEST_CASE("ablation path equals the zeroed-injection path") {
  Net on(FgConfig{}, 7), off(FgConfig{}, 7);
  off.fg->set_aag_enabled(false);
  zero_injections(on);
  auto in = random_inputs(1, 64, 16, 4);
  CHECK((*on.fg)(in.portrait, in.skeleton, in.affinity).value() ==
        (*off.fg)(in.portrait, in.skeleton, in.affinity).value());
  CHECK((*off.fg)(in.portrait, in.skeleton, V()).value() ==
        (*off.fg)(in.portrait, in.skeleton, in.affinity).value());
}

TEST_CASE("generator gradient check on a tiny config") {
  Net net(tiny_config(), 11);
  auto in = random_inputs(1, 16, 4, 6);
  auto leaves = testutil::leaves_of(net.params);
  leaves.emplace_back("affinity", V(in.affinity.value(), true));
  auto& aff = leaves.back().second;
  testutil::require_grads_match(testutil::grad_check(
      leaves, [&] { return ops::sum((*net.fg)(in.portrait, in.skeleton, aff)); }, 1e-6, 24));
}

TEST_CASE("generator input validation and non-finite detection") {
  Net net(tiny_config(), 1);
  auto in = random_inputs(1, 16, 4, 1);
  CHECK_THROWS_AS((*net.fg)(V(Tensor<double>(Shape{1, 3, 8, 8})), in.skeleton, in.affinity), ShapeError);
  CHECK_THROWS_AS((*net.fg)(in.portrait, V(Tensor<double>(Shape{1, 11, 16, 16})), in.affinity), ShapeError);
  auto bad = in.portrait.value();
  bad[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    (void)(*net.fg)(V(bad), in.skeleton, in.affinity);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("level 1") != std::string::npos);
  }
  FgConfig odd = tiny_config();
  odd.input_h = 18;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  FgConfig inj = tiny_config();
  inj.inject_levels = {2};
  CHECK_THROWS_AS(inj.validate(), ConfigError);
}
