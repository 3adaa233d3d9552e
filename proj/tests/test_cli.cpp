#include "helpers.hpp"

#include <httplib.h>

#include <chrono>
#include <sys/wait.h>

#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "aagn/config.hpp"
#include "aagn/image_io.hpp"
#include "aagn/synthetic.hpp"

using namespace aagn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
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

Outcome cli(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + AAGN_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

void expect_single_line_error(const Outcome& o) {
  CHECK(o.code != 0);
  const auto lines = lines_of(o.err);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].rfind("error: ", 0) == 0);
}

// Shared work directory: data, a trained tiny checkpoint.
const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = testutil::scratch_dir("cli");
    std::ofstream(d / "tiny.ini") << testutil::tiny_ini((d / "run").string());
    return d;
  }();
  return dir;
}

fs::path trained_checkpoint() {
  const auto& d = workdir();
  if (!fs::exists(d / "run" / "final.aagn")) {
    const auto o = cli(d, "train --config \"" + (d / "tiny.ini").string() + "\"");
    INFO(o.err);
    REQUIRE(o.code == 0);
  }
  return d / "run" / "final.aagn";
}

}  // namespace

TEST_CASE("gen-data writes a loadable dataset") {
  const auto& d = workdir();
  const auto o = cli(d, "gen-data --out \"" + (d / "data").string() + "\" --n 5 --seed 4 --size 32");
  INFO(o.err);
  REQUIRE(o.code == 0);
  const auto data = synthetic::load_dataset(d / "data");
  CHECK(data.size() == 5);
  CHECK(data[0].source.shape().h == 32);
}

TEST_CASE("train writes logs and checkpoints") {
  const auto ckpt = trained_checkpoint();
  CHECK(fs::exists(ckpt));
  const auto rows = lines_of(slurp(workdir() / "run" / "loss.csv"));
  CHECK(rows.size() == 7);
  CHECK(rows[0] == "step,L_flow,L_img,L_vgg,L_adv_g,L_adv_d,total");
}

TEST_CASE("reshape at zero strength leaves pixels untouched") {
  const auto& d = workdir();
  const auto ckpt = trained_checkpoint();
  const auto fig = synthetic::gen_portrait(11, 64);
  save_png(d / "in.png", fig.image);
  fig.kps.save(d / "in_kps.json");
  const auto args = "reshape --image \"" + (d / "in.png").string() + "\" --kps \"" +
                    (d / "in_kps.json").string() + "\" --ckpt \"" + ckpt.string() + "\"";
  auto o = cli(d, args + " --mu 0 --out \"" + (d / "out0.png").string() + "\"");
  INFO(o.err);
  REQUIRE(o.code == 0);
  CHECK(load_image(d / "out0.png") == load_image(d / "in.png"));

  o = cli(d, args + " --mu 0.7 --parts arms,legs --out \"" + (d / "out1.png").string() +
                 "\" --flow-out \"" + (d / "flow.flo1").string() + "\"");
  REQUIRE(o.code == 0);
  CHECK(load_image(d / "out1.png").shape() == Shape{1, 3, 64, 64});
  CHECK(fs::exists(d / "flow.flo1"));

  o = cli(d, "probe --image \"" + (d / "in.png").string() + "\" --kps \"" +
                 (d / "in_kps.json").string() + "\" --ckpt \"" + ckpt.string() + "\" --out \"" +
                 (d / "heat.png").string() + "\"");
  REQUIRE(o.code == 0);
  CHECK(lines_of(o.out).size() == 20);
  CHECK(fs::exists(d / "heat.png"));

  expect_single_line_error(cli(d, args + " --mu 2 --out \"" + (d / "bad.png").string() + "\""));
  expect_single_line_error(cli(d, args + " --mu 0.5 --parts wings --out \"" + (d / "bad.png").string() + "\""));
}

TEST_CASE("eval writes one row per image") {
  const auto& d = workdir();
  const auto ckpt = trained_checkpoint();
  if (!fs::exists(d / "data")) {
    REQUIRE(cli(d, "gen-data --out \"" + (d / "data").string() + "\" --n 5 --seed 4 --size 32").code == 0);
  }
  const auto o = cli(d, "eval --dataset \"" + (d / "data").string() + "\" --ckpt \"" +
                            ckpt.string() + "\" --out \"" + (d / "eval.csv").string() + "\"");
  INFO(o.err);
  REQUIRE(o.code == 0);
  const auto rows = lines_of(slurp(d / "eval.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == "image_id,ssim,psnr,perceptual,epe");
}

TEST_CASE("ablate prints the table") {
  const auto d = testutil::scratch_dir("cli_ablate");
  std::ofstream(d / "b.ini") << [&] {
    auto cfg = parse_config(testutil::tiny_ini((d / "run").string()));
    cfg.steps = 2;
    return to_ini(cfg);
  }();
  const auto o = cli(d, "ablate --axes aag,bsd --config \"" + (d / "b.ini").string() + "\" --out \"" +
                            (d / "table.md").string() + "\"");
  INFO(o.err);
  REQUIRE(o.code == 0);
  const auto rows = lines_of(o.out);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].rfind("| Exp | aag | bsd |", 0) == 0);
  CHECK(slurp(d / "table.md") == o.out);
  expect_single_line_error(cli(d, "ablate --axes wings --config \"" + (d / "b.ini").string() + "\""));
}

TEST_CASE("serve answers health checks") {
  const auto& d = workdir();
  const auto ckpt = trained_checkpoint();
  const auto log = d / "serve.txt", pid = d / "serve.pid";
  const std::string cmd = std::string("\"") + AAGN_CLI_PATH + "\" serve --port 0 --ckpt \"" +
                          ckpt.string() + "\" > \"" + log.string() + "\" 2>&1 & echo $! > \"" +
                          pid.string() + "\"";
  REQUIRE(std::system(cmd.c_str()) == 0);
  int port = 0;
  for (int i = 0; i < 200 && port == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    const auto text = slurp(log);
    const auto at = text.find("127.0.0.1:");
    if (at != std::string::npos) port = std::atoi(text.c_str() + at + 10);
  }
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto r = client.Get("/v1/health");
  const int server_pid = std::atoi(slurp(pid).c_str());
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(nlohmann::json::parse(r->body)["status"] == "ok");
  ::kill(server_pid, SIGTERM);
  for (int i = 0; i < 100 && ::kill(server_pid, 0) == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

TEST_CASE("failures are a single error line with a nonzero status") {
  const auto& d = workdir();
  expect_single_line_error(cli(d, "train --config /nonexistent.ini"));
  expect_single_line_error(cli(d, "eval --dataset /nonexistent --ckpt /nonexistent --out x.csv"));
  expect_single_line_error(cli(d, "reshape --image a.png"));
  expect_single_line_error(cli(d, "frobnicate"));
  expect_single_line_error(cli(d, "serve --ckpt /nonexistent.aagn"));
  std::ofstream(d / "bad.ini") << "[train]\nlr = fast\n";
  expect_single_line_error(cli(d, "train --config \"" + (d / "bad.ini").string() + "\""));
}
