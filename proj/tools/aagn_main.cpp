// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// aagn command line: gen-data, train, reshape, probe, eval, ablate, serve.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aagn/metrics.hpp"
#include "aagn/pipeline.hpp"
#include "aagn/server.hpp"
#include "aagn/trainer.hpp"
#include "aagn/warp.hpp"

namespace {

using namespace aagn;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_gen_data(const std::string& out, int n, std::uint64_t seed, int size,
                 const synthetic::WarpSpec& spec_in) {
  auto spec = spec_in;
  spec.seed = seed;
  synthetic::write_dataset(out, seed, n, spec, size);
  std::cout << "wrote " << n << " samples to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  const TrainConfig cfg = load_config(config_path);
  auto data = trainer::dataset_for(cfg);
  std::unique_ptr<trainer::Trainer> t;
  if (resume.empty()) {
    t = std::make_unique<trainer::Trainer>(cfg, std::move(data));
  } else {
    t = std::make_unique<trainer::Trainer>(trainer::resume_state(cfg, resume), std::move(data));
  }
  const auto t0 = std::chrono::steady_clock::now();
  trainer::RunOptions opt;
  opt.on_step = [&](const trainer::LossRecord& r) {
    if ((r.step + 1) % 50 == 0) {
      std::printf("step %lld total %.6f flow %.6f (%.1fs)\n", static_cast<long long>(r.step + 1),
                  r.total, r.flow, elapsed(t0));
      std::fflush(stdout);
    }
  };
  opt.on_eval = [&](const trainer::EvalRecord& e) {
    std::printf("eval step %lld epe %.4f ssim %.4f (identity %.4f) psnr %s perceptual %.4f\n",
                static_cast<long long>(e.step), e.epe, e.ssim, e.ssim_identity,
                metrics::format_psnr(e.psnr).c_str(), e.perceptual);
    std::fflush(stdout);
  };
  const auto res = trainer::run(*t, opt);
  std::cout << "checkpoint " << res.final_checkpoint.string() << "\n";
  return 0;
}

int cmd_reshape(const std::string& image, const std::string& kps, double mu,
                const std::string& parts, const std::string& ckpt, const std::string& out,
                const std::string& flow_out) {
  const auto pipeline = service::Pipeline::from_checkpoint(ckpt);
  const auto res = pipeline.reshape(load_image(image), skeleton::KeypointSet::load(kps), mu,
                                    skeleton::PartSelection::parse(parts));
  save_png(out, res.image);
  if (!flow_out.empty()) warp::write_flo1(flow_out, res.flow);
  std::printf("flow max %.4f mean %.4f px", res.stats.max, res.stats.mean);
  if (!res.wc.empty()) {
    std::printf(" wc");
    for (double w : res.wc) std::printf(" %.4f", w);
  }
  std::printf("\n");
  return 0;
}

int cmd_probe(const std::string& image, const std::string& kps, const std::string& ckpt,
              const std::string& pi, const std::string& pj, int row, int col, int top_k,
              const std::string& out) {
  const auto pipeline = service::Pipeline::from_checkpoint(ckpt);
  const auto res =
      pipeline.affinity_probe(load_image(image), skeleton::KeypointSet::load(kps),
                              skeleton::parse_part(pi), skeleton::parse_part(pj), row, col, top_k);
  const auto& a = res.affinity;
  if (!out.empty()) {
    Tensor<float> heat(Shape{1, 1, a.h, a.w});
    const auto [lo, hi] = std::minmax_element(a.heatmap.begin(), a.heatmap.end());
    for (std::size_t i = 0; i < a.heatmap.size(); ++i) {
      heat[i] = *hi > *lo ? static_cast<float>((a.heatmap[i] - *lo) / (*hi - *lo)) : 0.0f;
    }
    save_plane_png(out, heat, 0, 0);
  }
  for (const auto& p : res.pixel_points) std::printf("%d,%d,%.6f\n", p.row, p.col, p.value);
  return 0;
}

int cmd_eval(const std::string& dataset, const std::string& ckpt, const std::string& out) {
  const auto state = load_checkpoint(ckpt);
  const auto data = synthetic::load_dataset(dataset);
  const auto rows =
      trainer::evaluate_samples(*state->model, data, 0, static_cast<int>(data.size()));
  std::ofstream csv(out);
  if (!csv) throw FormatError("cannot write " + out);
  csv << trainer::kImageCsvHeader << "\n";
  double ssim = 0.0, epe = 0.0;
  for (const auto& r : rows) {
    csv << trainer::csv_row(r) << "\n";
    ssim += r.ssim;
    epe += r.epe;
  }
  std::printf("%zu images, mean ssim %.4f, mean epe %.4f\n", rows.size(), ssim / rows.size(),
              epe / rows.size());
  return 0;
}

int cmd_ablate(const std::string& axes_list, const std::string& config_path,
               const std::string& out) {
  const TrainConfig cfg = load_config(config_path);
  const auto axes = split_list(axes_list);
  const auto data = trainer::dataset_for(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = trainer::ablation_run(cfg, axes, data, [&](const trainer::AblationRow& r) {
    std::fprintf(stderr, "%s done (%.1fs)\n", r.label.c_str(), elapsed(t0));
  });
  trainer::write_ablation_table(std::cout, axes, rows);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw FormatError("cannot write " + out);
    trainer::write_ablation_table(f, axes, rows);
  }
  return 0;
}

service::Server* g_server = nullptr;

int cmd_serve(const std::string& ckpt, const std::string& host, int port) {
  const auto pipeline = service::Pipeline::from_checkpoint(ckpt);
  service::Server server(pipeline);
  const int bound = server.bind(host, port);
  std::printf("serving on http://%s:%d (checkpoint %s)\n", host.c_str(), bound,
              hash_hex(pipeline.checkpoint_hash()).c_str());
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Body reshaping with affinity-graph guided flow generation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  std::string gen_out;
  int gen_n = 500, gen_size = 64;
  std::uint64_t gen_seed = 1;
  synthetic::WarpSpec spec;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--size", gen_size, "Image size")->check(CLI::Range(16, 4096));
  gen->add_option("--grid", spec.grid, "Jitter control grid");
  gen->add_option("--max-disp", spec.max_disp, "Jitter bound (pixels)");
  gen->add_option("--sigma", spec.sigma, "Jitter smoothing (pixels)");
  gen->add_option("--slim-ratio", spec.slim_ratio, "Body slimming ratio");

  auto* train = app.add_subcommand("train", "Train from a config file");
  std::string train_cfg, train_resume;
  train->add_option("--config", train_cfg, "INI config")->required();
  train->add_option("--resume", train_resume, "Checkpoint to continue from");

  auto* reshape = app.add_subcommand("reshape", "Reshape one portrait");
  std::string rs_image, rs_kps, rs_parts = "all", rs_ckpt, rs_out, rs_flow;
  double rs_mu = 1.0;
  reshape->add_option("--image", rs_image, "Input image")->required();
  reshape->add_option("--kps", rs_kps, "Keypoint JSON")->required();
  reshape->add_option("--mu", rs_mu, "Strength in [-1, 1]");
  reshape->add_option("--parts", rs_parts, "Comma separated parts, 'all' or 'none'");
  reshape->add_option("--ckpt", rs_ckpt, "Checkpoint")->required();
  reshape->add_option("--out", rs_out, "Output PNG")->required();
  reshape->add_option("--flow-out", rs_flow, "Optional full-resolution flow (.flo1)");

  auto* probe = app.add_subcommand("probe", "Point affinity between two body parts");
  std::string pr_image, pr_kps, pr_ckpt, pr_i = "arms", pr_j = "torso", pr_out;
  int pr_row = 0, pr_col = 0, pr_k = 20;
  probe->add_option("--image", pr_image, "Input image")->required();
  probe->add_option("--kps", pr_kps, "Keypoint JSON")->required();
  probe->add_option("--ckpt", pr_ckpt, "Checkpoint")->required();
  probe->add_option("--part-i", pr_i, "Query part");
  probe->add_option("--part-j", pr_j, "Key part");
  probe->add_option("--row", pr_row, "Query row on the feature grid");
  probe->add_option("--col", pr_col, "Query column on the feature grid");
  probe->add_option("--top-k", pr_k, "Number of points");
  probe->add_option("--out", pr_out, "Heatmap PNG");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_data, ev_ckpt, ev_out;
  eval->add_option("--dataset", ev_data, "Dataset directory")->required();
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  eval->add_option("--out", ev_out, "Output CSV")->required();

  auto* ablate = app.add_subcommand("ablate", "Train every flag combination");
  std::string ab_axes, ab_cfg, ab_out;
  ablate->add_option("--axes", ab_axes, "Comma separated flags, e.g. aag,bsd")->required();
  ablate->add_option("--config", ab_cfg, "INI config")->required();
  ablate->add_option("--out", ab_out, "Also write the table here");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve->add_option("--ckpt", sv_ckpt, "Checkpoint")->required();
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--port", sv_port, "Port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, gen_n, gen_seed, gen_size, spec);
    if (*train) return cmd_train(train_cfg, train_resume);
    if (*reshape) {
      return cmd_reshape(rs_image, rs_kps, rs_mu, rs_parts, rs_ckpt, rs_out, rs_flow);
    }
    if (*probe) {
      return cmd_probe(pr_image, pr_kps, pr_ckpt, pr_i, pr_j, pr_row, pr_col, pr_k, pr_out);
    }
    if (*eval) return cmd_eval(ev_data, ev_ckpt, ev_out);
    if (*ablate) return cmd_ablate(ab_axes, ab_cfg, ab_out);
    if (*serve) return cmd_serve(sv_ckpt, sv_host, sv_port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
