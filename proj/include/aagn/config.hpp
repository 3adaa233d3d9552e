// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration, read from and written to INI text:
//
//   [train]   lr, batch, steps, seed, checkpoint_interval, eval_interval, out_dir
//   [flags]   use_aag, use_cbam, use_bsd, use_vgg, use_img, mask_pose
//   [loss]    lambda_flow, lambda_img, lambda_vgg, lambda_adv
//   [data]    count, size, seed, dir, holdout, grid, max_disp, sigma, slim_ratio
//   [model]   fg_channels, fg_max_disp, fg_head_gain, inject_levels,
//             aag_channels, aag_hidden, cbam_reduction, bsd_channels, use_srm,
//             perceptual_layer, perceptual_seed, raster_thickness
//   [infer]   downsample

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "aagn/affinity_graph.hpp"
#include "aagn/discriminator.hpp"
#include "aagn/flow_generator.hpp"
#include "aagn/objectives.hpp"
#include "aagn/synthetic.hpp"

namespace aagn {

struct AblationFlags {
  bool use_aag = true;
  bool use_cbam = true;
  bool use_bsd = true;
  bool use_vgg = true;
  bool use_img = true;
  bool mask_pose = false;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ModelConfig {
  flowgen::FgConfig fg;
  affinity::AagConfig aag;
  disc::BsdConfig bsd;
  int perceptual_layer = 2;
  std::uint64_t perceptual_seed = 0x5eed;
  double raster_thickness = 0.0;  // 0 selects default_thickness(size)
};

struct DataConfig {
  int count = 500;
  int size = 64;
  std::uint64_t seed = 1;
  std::string dir;         // empty: generate in memory
  double holdout = 0.1;    // trailing fraction held out for evaluation
  synthetic::WarpSpec spec;
};

struct TrainConfig {
  double lr = 1e-5;
  int batch = 8;
  int steps = 2000;
  std::uint64_t seed = 7;
  int checkpoint_interval = 500;
  int eval_interval = 500;
  std::string out_dir = "run";
  objectives::LossWeights weights;
  AblationFlags flags;
  DataConfig data;
  ModelConfig model;
  int downsample = 0;  // inference ratio; 0 = image height / model input

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

TrainConfig parse_config(const std::string& ini_text);
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical INI text; parse_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const TrainConfig& cfg);

/// FNV-1a over the canonical text with ablation flags, run length, intervals
/// and output paths normalised, so runs differing only in those share a hash.
std::uint64_t config_hash(const TrainConfig& cfg);
std::string hash_hex(std::uint64_t h);

/// The flag names accepted by the ablation harness ("aag", "cbam", ...).
bool* flag_by_name(AblationFlags& flags, const std::string& name);

}  // namespace aagn
