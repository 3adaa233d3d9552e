#include "helpers.hpp"

#include <fstream>
#include <sstream>

#include "aagn/trainer.hpp"

using namespace aagn;
using namespace aagn::trainer;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

bool same_params(const nn::ParamSet<float>& a, const nn::ParamSet<float>& b) {
  if (a.items().size() != b.items().size()) return false;
  for (std::size_t i = 0; i < a.items().size(); ++i) {
    if (a.items()[i].first != b.items()[i].first) return false;
    if (!(a.items()[i].second.value() == b.items()[i].second.value())) return false;
  }
  return true;
}

bool same_moments(const nn::Adam<float>& a, const nn::Adam<float>& b) {
  return a.steps() == b.steps() && a.first_moments() == b.first_moments() &&
         a.second_moments() == b.second_moments();
}

// Checkpoints embed the output directory, so runs in different directories
// are compared by their restored state.
bool same_state(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto sa = load_checkpoint(a), sb = load_checkpoint(b);
  return sa->step == sb->step &&
         same_params(sa->model->generator_params(), sb->model->generator_params()) &&
         same_params(sa->model->discriminator_params(), sb->model->discriminator_params()) &&
         same_moments(sa->g_opt, sb->g_opt) && same_moments(sa->d_opt, sb->d_opt);
}

RunResult train_tiny(const std::filesystem::path& dir, const std::string& extra = "") {
  const auto cfg = parse_config(testutil::tiny_ini(dir.string(), extra));
  Trainer t(cfg, dataset_for(cfg));
  return run(t);
}

}  // namespace

TEST_CASE("batches depend only on seed and step") {
  const auto cfg = parse_config(testutil::tiny_ini("/tmp/unused"));
  const auto data = dataset_for(cfg);
  Trainer a(cfg, data), b(cfg, data);
  CHECK(a.train_size() == 9);
  CHECK(a.holdout_size() == 3);
  for (std::int64_t s = 0; s < 20; ++s) {
    const auto ia = a.batch_indices(s);
    CHECK(ia == b.batch_indices(s));
    CHECK(ia.size() == 2);
    CHECK(ia[0] != ia[1]);
    for (int i : ia) CHECK((i >= 0 && i < 9));
  }
  CHECK(train_count(500, 0.1) == 450);
  CHECK_THROWS_AS(train_count(2, 0.9), ConfigError);
}

TEST_CASE("repeated runs write identical loss logs") {
  const auto d1 = testutil::scratch_dir("run_a"), d2 = testutil::scratch_dir("run_b");
  const auto r1 = train_tiny(d1), r2 = train_tiny(d2);
  const auto log = slurp(d1 / "loss.csv");
  CHECK(log == slurp(d2 / "loss.csv"));
  const auto rows = lines_of(log);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == kLossCsvHeader);
  CHECK(r1.losses.size() == 6);
  CHECK(same_state(r1.final_checkpoint, r2.final_checkpoint));
  // evaluations at 0, 3 and the final step 6
  REQUIRE(r1.evals.size() == 3);
  CHECK(r1.evals[0].step == 0);
  CHECK(r1.evals[2].step == 6);
  CHECK(lines_of(slurp(d1 / "eval.csv")).size() == 4);
  CHECK(std::filesystem::exists(d1 / "ckpt_000003.aagn"));
  CHECK(std::filesystem::exists(d1 / "final.aagn"));
}

TEST_CASE("logged components recombine into the logged total") {
  const auto dir = testutil::scratch_dir("recombine");
  train_tiny(dir);
  const auto cfg = parse_config(testutil::tiny_ini(dir.string()));
  const auto rows = lines_of(slurp(dir / "loss.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto v = split_doubles(rows[i]);
    REQUIRE(v.size() == 7);
    const double re = cfg.weights.flow * v[1] + cfg.weights.img * v[2] + cfg.weights.vgg * v[3] +
                      cfg.weights.adv * v[4];
    CHECK(std::abs(re - v[6]) <= 1e-6);
    CHECK(v[5] > 0.0);
  }
}

TEST_CASE("disabling the discriminator freezes it") {
  const auto cfg = parse_config(testutil::tiny_ini("/tmp/unused", "[flags]\nuse_bsd = false\n"));
  Trainer t(cfg, dataset_for(cfg));
  TrainState fresh(cfg, cfg.seed);
  CHECK(same_params(t.state().model->discriminator_params(), fresh.model->discriminator_params()));
  for (int i = 0; i < 3; ++i) {
    const auto rec = t.step();
    CHECK(rec.adv_d == 0.0);
    CHECK(rec.adv_g == 0.0);
  }
  CHECK(same_params(t.state().model->discriminator_params(), fresh.model->discriminator_params()));
  CHECK(t.state().d_opt.steps() == 0);
  for (const auto& m : t.state().d_opt.first_moments()) CHECK(m.max_abs() == 0.0f);
  CHECK_FALSE(same_params(t.state().model->generator_params(), fresh.model->generator_params()));
  CHECK(t.state().g_opt.steps() == 3);
}

TEST_CASE("checkpoints round trip byte for byte") {
  const auto dir = testutil::scratch_dir("ckpt");
  const auto res = train_tiny(dir);
  const auto bytes = slurp(res.final_checkpoint);
  CHECK(bytes.rfind(kCheckpointMagic, 0) == 0);
  const auto state = load_checkpoint(res.final_checkpoint);
  CHECK(state->step == 6);
  save_checkpoint(dir / "again.aagn", *state);
  CHECK(slurp(dir / "again.aagn") == bytes);

  std::vector<std::uint8_t> raw(bytes.begin(), bytes.end());
  CHECK(bytes_hash(raw) == bytes_hash(serialize_checkpoint(*state)));
  raw.resize(raw.size() / 2);
  CHECK_THROWS_AS(deserialize_checkpoint(raw), FormatError);
  raw.assign(bytes.begin(), bytes.end());
  raw[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(raw), FormatError);
}

TEST_CASE("resuming matches an uninterrupted run") {
  const auto full = testutil::scratch_dir("resume_full"), part = testutil::scratch_dir("resume_part");
  const auto whole = train_tiny(full);

  auto cfg = parse_config(testutil::tiny_ini(part.string()));
  cfg.steps = 3;
  {
    Trainer t(cfg, dataset_for(cfg));
    run(t);
  }
  cfg.steps = 6;
  Trainer t2(resume_state(cfg, part / "final.aagn"), dataset_for(cfg));
  CHECK(t2.state().step == 3);
  const auto rest = run(t2);
  CHECK(rest.losses.size() == 3);
  CHECK(slurp(part / "loss.csv") == slurp(full / "loss.csv"));
  CHECK(same_state(part / "final.aagn", whole.final_checkpoint));

  auto other = cfg;
  other.lr = 0.5;
  CHECK_THROWS_AS(resume_state(other, part / "final.aagn"), ConfigError);
  auto flipped = cfg;
  flipped.flags.use_aag = false;
  CHECK_THROWS_AS(resume_state(flipped, part / "final.aagn"), ConfigError);
}

TEST_CASE("ablation grids") {
  auto base = parse_config(testutil::tiny_ini(testutil::scratch_dir("ablate").string()));
  base.steps = 2;
  base.eval_interval = 0;
  const auto data = dataset_for(base);

  const auto one = ablation_run(base, {"cbam"}, data);
  REQUIRE(one.size() == 2);
  CHECK_FALSE(one[0].flags.use_cbam);
  CHECK(one[1].flags.use_cbam);

  int seen = 0;
  const auto two = ablation_run(base, {"aag", "bsd"}, data, [&](const AblationRow&) { ++seen; });
  REQUIRE(two.size() == 4);
  CHECK(seen == 4);
  const bool expect[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(two[i].label == "Exp " + std::to_string(i + 1));
    CHECK(two[i].flags.use_aag == expect[i][0]);
    CHECK(two[i].flags.use_bsd == expect[i][1]);
    CHECK(two[i].seed == base.seed);
    CHECK(two[i].config_hash == two[0].config_hash);
    CHECK(two[i].result.step == 2);
    CHECK(std::isfinite(two[i].result.epe));
  }
  std::ostringstream table;
  write_ablation_table(table, {"aag", "bsd"}, two);
  const auto rows = lines_of(table.str());
  CHECK(rows.size() == 6);
  CHECK(rows[0].find("| Exp | aag | bsd |") == 0);
  CHECK(rows[2].find("| 1 | off | off |") == 0);
  CHECK(rows[5].find("| 4 | on | on |") == 0);

  CHECK_THROWS_AS(ablation_run(base, {"wings"}, data), ConfigError);
  CHECK_THROWS_AS(ablation_run(base, {}, data), ConfigError);
}

TEST_CASE("evaluation rows and CSV formatting") {
  const auto cfg = parse_config(testutil::tiny_ini("/tmp/unused"));
  const auto data = dataset_for(cfg);
  Trainer t(cfg, data);
  const auto per = t.evaluate_range(9, 12);
  REQUIRE(per.size() == 3);
  const auto again = evaluate_samples(*t.state().model, data, 9, 12);
  const auto e = t.evaluate();
  double ssim = 0, epe = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(per[i].id == static_cast<int>(9 + i));
    CHECK(csv_row(per[i]) == csv_row(again[i]));
    ssim += per[i].ssim / 3;
    epe += per[i].epe / 3;
  }
  CHECK(std::abs(e.ssim - ssim) <= 1e-9);
  CHECK(std::abs(e.epe - epe) <= 1e-9);
  CHECK(e.ssim_identity > 0.0);
  CHECK(csv_row(LossRecord{3, 0.5, 0.25, 0, 0, 0, 1}) == "3,0.5,0.25,0,0,0,1");

  auto wrong = cfg;
  wrong.batch = 50;
  CHECK_THROWS_AS(Trainer(wrong, data), ConfigError);
}
