// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "aagn/config.hpp"

namespace aagn {

/// Generator side (AAG, injection encoders, FG), discriminator and the
/// frozen perceptual extractor, built from one config and seed.
class Model {
 public:
  Model(const TrainConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  [[nodiscard]] const TrainConfig& config() const { return cfg_; }

  nn::ParamSet<float>& generator_params() { return g_params_; }
  nn::ParamSet<float>& discriminator_params() { return d_params_; }
  [[nodiscard]] const nn::ParamSet<float>& generator_params() const { return g_params_; }
  [[nodiscard]] const nn::ParamSet<float>& discriminator_params() const { return d_params_; }

  [[nodiscard]] const affinity::AffinityGraph<float>& aag() const { return *aag_; }
  [[nodiscard]] const flowgen::FlowGenerator<float>& generator() const { return *fg_; }
  [[nodiscard]] const disc::Discriminator<float>& discriminator() const { return *bsd_; }
  [[nodiscard]] const objectives::PerceptualExtractor<float>& perceptual() const {
    return *perceptual_;
  }

  /// Skeleton map (1, 12, size, size) for keypoints given on any grid.
  [[nodiscard]] Tensor<float> skeleton_map(const skeleton::KeypointSet& kps) const;

  struct Output {
    ag::Var<float> flow;    // (n, 2, H, W)
    ag::Var<float> warped;  // backward_warp(portrait, flow)
    affinity::AagOutput<float> aag;  // empty when the AAG is disabled
  };
  /// Generator forward pass honouring the use_aag and use_cbam flags.
  [[nodiscard]] Output forward(const ag::Var<float>& portrait, const ag::Var<float>& skeleton) const;

 private:
  TrainConfig cfg_;
  nn::ParamSet<float> g_params_;
  nn::ParamSet<float> d_params_;
  std::unique_ptr<affinity::AffinityGraph<float>> aag_;
  std::unique_ptr<flowgen::FlowGenerator<float>> fg_;
  std::unique_ptr<disc::Discriminator<float>> bsd_;
  std::unique_ptr<objectives::PerceptualExtractor<float>> perceptual_;
};

/// Everything needed to continue a run or serve a model.
struct TrainState {
  std::unique_ptr<Model> model;
  nn::Adam<float> g_opt;
  nn::Adam<float> d_opt;
  std::int64_t step = 0;

  TrainState(const TrainConfig& cfg, std::uint64_t seed);
};

inline constexpr const char* kCheckpointMagic = "AAGNCKPT v1\n";

/// Binary checkpoint: magic line, config hash, step, seed, config text,
/// generator and discriminator parameters by name, then both Adam states.
/// All integers and floats are little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);

/// Rebuilds the model from the embedded config and restores every value.
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<TrainState> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Hash of the raw checkpoint bytes (FNV-1a), reported by the service.
std::uint64_t bytes_hash(const std::vector<std::uint8_t>& bytes);

}  // namespace aagn
