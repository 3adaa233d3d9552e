// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "aagn/image_io.hpp"
#include "aagn/skeleton.hpp"

namespace aagn::synthetic {

/// Parameters of the ground-truth editing flow. The flow is a body-aligned
/// slimming field (every limb and the torso contract towards their axis by
/// slim_ratio of their drawn radius) plus a smooth random jitter field.
struct WarpSpec {
  int grid = 5;              // jitter control points per side
  double max_disp = 0.05;    // jitter bound, pixels
  double sigma = 4.0;        // jitter smoothing, pixels
  std::uint64_t seed = 0;    // mixed into every per-sample seed
  double slim_ratio = 0.5;   // 0 disables the body field

  /// Largest possible |flow| for figures drawn at `size`.
  [[nodiscard]] double flow_bound(int size) const;
  /// Throws ConfigError if the spec is malformed or its flow bound exceeds
  /// `generator_max_disp`.
  void validate(int size, double generator_max_disp) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static WarpSpec from_json(const nlohmann::json& j);
};

/// Segment with a radius, in pixel coordinates (x = column, y = row).
struct Capsule {
  double ax, ay, bx, by;
  double radius;
};

struct Figure {
  Portrait image;              // (1, 3, size, size), 8-bit quantised
  skeleton::KeypointSet kps;
  std::vector<Capsule> limbs;  // arm, leg and torso capsules that get slimmed
};

/// Procedural figure on a textured background. Deterministic per seed;
/// every joint lies at least kJointMargin pixels inside the image.
Figure gen_portrait(std::uint64_t seed, int size = 64);
inline constexpr double kJointMargin = 2.0;

/// Smooth random field: control vectors drawn uniformly in the disk of
/// radius spec.max_disp, bilinearly upsampled, then Gaussian blurred with
/// reflect padding. Both stages are convex, so |flow| <= spec.max_disp.
FlowField gen_flow(std::uint64_t seed, const WarpSpec& spec, int h, int w);

/// Normalised 1-D Gaussian taps used by gen_flow, radius ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

/// Outward-normal displacement that thins each capsule; (1, 2, h, w).
FlowField slimming_field(const std::vector<Capsule>& limbs, double slim_ratio, int h, int w);

struct SyntheticSample {
  Portrait source;   // P_o
  skeleton::KeypointSet kps;
  FlowField flow;    // O_t
  Portrait target;   // P_t = backward_warp(P_o, O_t)
};

SyntheticSample make_sample(std::uint64_t seed, const WarpSpec& spec, int size = 64);

/// Per-sample seed of sample `index` in a dataset generated from `seed`.
std::uint64_t sample_seed(std::uint64_t seed, int index);

std::vector<SyntheticSample> make_dataset(std::uint64_t seed, int count, const WarpSpec& spec,
                                          int size = 64);

/// Writes NNNN_src.png, NNNN_tgt.png, NNNN_kps.json, NNNN_flow.flo1 and
/// manifest.json into `dir`.
void write_dataset(const std::filesystem::path& dir, std::uint64_t seed, int count,
                   const WarpSpec& spec, int size = 64);

/// Reads a dataset directory. Targets are recomputed from source and flow so
/// the consistency triple holds exactly; the stored target PNG must agree
/// with it to 8-bit precision.
std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir);

}  // namespace aagn::synthetic
