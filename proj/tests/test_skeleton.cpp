#include "helpers.hpp"

#include "aagn/skeleton.hpp"
#include "aagn/synthetic.hpp"

using namespace aagn;
using namespace aagn::skeleton;

namespace {

KeypointSet two_joints(double ax, double ay, double bx, double by, int h, int w) {
  KeypointSet k;
  k.height = h;
  k.width = w;
  k.joints = {{"a", ax, ay, 1.0}, {"b", bx, by, 1.0}};
  return k;
}

BoneTable one_bone() { return BoneTable{{{"a", "b", Part::arms}}}; }

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double l2 = dx * dx + dy * dy;
  double t = l2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

KeypointSet random_pose(Rng& rng, int size) {
  KeypointSet k;
  k.height = k.width = size;
  for (const auto& n : standard_joint_names()) {
    k.joints.push_back({n, rng.uniform(4, size - 4), rng.uniform(4, size - 4), 1.0});
  }
  return k;
}

Tensor<float> random_map(Rng& rng) {
  return testutil::random_tensor<float>(Shape{2, 12, 5, 6}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("degenerate bone stamps a disc") {
  const auto m = rasterize(two_joints(5, 5, 5, 5, 11, 11), one_bone(), 11, 11, {1.5, 0.05});
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const bool inside = std::hypot(x - 5.0, y - 5.0) <= 1.5;
      CHECK(m.at(0, 0, y, x) == (inside ? 1.0f : 0.0f));
    }
}

TEST_CASE("horizontal bone matches the brute-force distance oracle") {
  const auto m = rasterize(two_joints(2, 4, 6, 4, 8, 8), one_bone(), 8, 8, {0.5, 0.05});
  int set = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool oracle = seg_dist(x, y, 2, 4, 6, 4) <= 0.5;
      CHECK(m.at(0, 0, y, x) == (oracle ? 1.0f : 0.0f));
      set += m.at(0, 0, y, x) > 0;
      if (y == 4 && x >= 2 && x <= 6) CHECK(m.at(0, 0, y, x) == 1.0f);
    }
  CHECK(set == 5);
}

TEST_CASE("random bones match the distance oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const double ax = rng.uniform(-5, 20), ay = rng.uniform(-5, 20);
    const double bx = rng.uniform(-5, 20), by = rng.uniform(-5, 20);
    const double th = rng.uniform(0.5, 3.0);
    const auto m = rasterize(two_joints(ax, ay, bx, by, 16, 16), one_bone(), 16, 16, {th, 0.05});
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        CHECK(m.at(0, 0, y, x) == (seg_dist(x, y, ax, ay, bx, by) <= th ? 1.0f : 0.0f));
      }
  }
}

TEST_CASE("bone partly outside the image is clipped") {
  const auto m = rasterize(two_joints(-3, 4, 6, 4, 8, 8), one_bone(), 8, 8, {0.5, 0.05});
  for (int x = 0; x < 8; ++x) CHECK(m.at(0, 0, 4, x) == (x <= 6 ? 1.0f : 0.0f));
  CHECK(m.at(0, 0, 3, 0) == 0.0f);
}

TEST_CASE("low-confidence bones are dropped and unknown joints rejected") {
  auto k = two_joints(1, 1, 6, 6, 8, 8);
  k.joints[1].confidence = 0.01;
  CHECK(rasterize(k, one_bone(), 8, 8).max_abs() == 0.0f);
  BoneTable bad{{{"a", "nope", Part::arms}}};
  CHECK_THROWS_AS(rasterize(k, bad, 8, 8), ConfigError);
  CHECK_THROWS_AS(rasterize(k, one_bone(), 8, 8, {0.4, 0.05}), RangeError);
}

TEST_CASE("standard bone table") {
  const auto t = BoneTable::standard();
  CHECK_NOTHROW(t.validate());
  CHECK(t.bones.size() == 12);
  for (Part p : kAllParts) CHECK(t.channels_of(p).size() == 4);
  Rng rng(1);
  CHECK(missing_joints(random_pose(rng, 64), t).empty());
  BoneTable short_table{{t.bones.begin(), t.bones.begin() + 11}};
  CHECK_THROWS_AS(short_table.validate(), ConfigError);
}

TEST_CASE("group_parts partitions and round-trips") {
  Rng rng(8);
  const auto bones = BoneTable::standard();
  const auto s = random_map(rng);
  const auto st = group_parts(s, bones);
  int total = 0;
  for (Part p : kAllParts) {
    CHECK(st.get(p).shape() == Shape{2, 4, 5, 6});
    total += st.get(p).shape().c;
  }
  CHECK(total == 12);
  Tensor<float> back(s.shape());
  for (Part p : kAllParts) {
    const auto ch = bones.channels_of(p);
    for (int n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < ch.size(); ++k)
        for (std::size_t i = 0; i < s.shape().plane(); ++i)
          back.plane(n, ch[k])[i] = st.get(p).plane(n, static_cast<int>(k))[i];
  }
  CHECK(back == s);
}

TEST_CASE("mask_parts") {
  Rng rng(3);
  const auto bones = BoneTable::standard();
  const auto s = random_map(rng);
  CHECK(mask_parts(s, bones, PartSelection::all()) == s);
  CHECK(mask_parts(s, bones, PartSelection::none()).max_abs() == 0.0f);

  const auto legs = mask_parts(s, bones, PartSelection::parse("legs"));
  const auto st = group_parts(legs, bones);
  CHECK(st.arms.max_abs() == 0.0f);
  CHECK(st.torso.max_abs() == 0.0f);
  CHECK(st.legs == group_parts(s, bones).legs);

  for (const char* sel : {"arms", "torso,legs", "none", "all", "arms,legs"}) {
    const auto ps = PartSelection::parse(sel);
    const auto once = mask_parts(s, bones, ps);
    CHECK(mask_parts(once, bones, ps) == once);
    const auto g1 = group_parts(once, bones);
    const auto g0 = group_parts(s, bones);
    for (Part p : kAllParts) {
      if (ps.enabled(p)) {
        CHECK(g1.get(p) == g0.get(p));
      } else {
        CHECK(g1.get(p).max_abs() == 0.0f);
      }
    }
  }
  CHECK_THROWS(PartSelection::parse("arms,wings"));
}

TEST_CASE("rasterization is translation equivariant") {
  Rng rng(21);
  const auto bones = BoneTable::standard();
  for (int trial = 0; trial < 5; ++trial) {
    auto k = random_pose(rng, 48);
    const int dx = rng.uniform_int(-6, 6), dy = rng.uniform_int(-6, 6);
    auto shifted = k;
    for (auto& j : shifted.joints) {
      j.x += dx;
      j.y += dy;
    }
    const auto a = rasterize(k, bones, 48, 48);
    const auto b = rasterize(shifted, bones, 48, 48);
    for (int c = 0; c < 12; ++c)
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
          const int ys = y + dy, xs = x + dx;
          if (ys < 0 || ys >= 48 || xs < 0 || xs >= 48) continue;
          CHECK(a.at(0, c, y, x) == b.at(0, c, ys, xs));
        }
  }
}

TEST_CASE("half resolution raster agrees with nearest downsampling") {
  Rng rng(5);
  const auto bones = BoneTable::standard();
  std::size_t agree = 0, total = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto k = random_pose(rng, 64);
    const auto full = rasterize(k, bones, 64, 64, {3.0, 0.05});
    const auto half = rasterize(k, bones, 32, 32, {1.5, 0.05});
    for (int c = 0; c < 12; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          agree += full.at(0, c, 2 * y, 2 * x) == half.at(0, c, y, x);
          ++total;
        }
  }
  CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("keypoints rescale with the raster grid and round-trip through JSON") {
  const auto fig = synthetic::gen_portrait(3, 64);
  const auto bones = BoneTable::standard();
  const auto k2 = KeypointSet::from_json(fig.kps.to_json());
  CHECK(k2.height == 64);
  CHECK(k2.joints.size() == fig.kps.joints.size());
  for (const auto& j : fig.kps.joints) {
    const Joint* r = k2.find(j.name);
    REQUIRE(r != nullptr);
    CHECK(r->x == j.x);
    CHECK(r->y == j.y);
    CHECK(r->confidence == j.confidence);
  }
  // Same keypoints declared on a 128 grid with doubled coordinates raster identically.
  auto big = fig.kps;
  big.height = big.width = 128;
  for (auto& j : big.joints) {
    j.x *= 2;
    j.y *= 2;
  }
  CHECK(rasterize(big, bones, 64, 64) == rasterize(fig.kps, bones, 64, 64));
  CHECK(default_thickness(64) == 1.5);
  CHECK(default_thickness(128) == 3.0);
  CHECK_THROWS(KeypointSet::from_json(nlohmann::json::parse(R"({"joints":{}})")));
}
