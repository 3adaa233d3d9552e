// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Keypoints to 12-channel bone maps, grouped into arms / torso / legs.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aagn/tensor.hpp"

namespace aagn::skeleton {

enum class Part { arms = 0, torso = 1, legs = 2 };
inline constexpr int kNumParts = 3;
inline constexpr int kNumBones = 12;
inline constexpr std::array<Part, 3> kAllParts{Part::arms, Part::torso, Part::legs};

std::string part_name(Part p);
/// Accepts "arms", "torso", "legs"; throws ConfigError otherwise.
Part parse_part(const std::string& name);

struct Joint {
  std::string name;
  double x = 0.0;  // column, pixels
  double y = 0.0;  // row, pixels
  double confidence = 1.0;
};

struct KeypointSet {
  std::vector<Joint> joints;
  int height = 0;
  int width = 0;

  [[nodiscard]] const Joint* find(const std::string& name) const;
  /// Coordinates mapped onto an (h, w) image.
  [[nodiscard]] KeypointSet rescaled(int h, int w) const;

  static KeypointSet from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
  static KeypointSet load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct Bone {
  std::string joint_a;
  std::string joint_b;
  Part part;
};

/// Ordered bone list; channel index = position.
struct BoneTable {
  std::vector<Bone> bones;

  /// 4 arm, 4 torso, 4 leg bones over the 14 standard joint names.
  static BoneTable standard();
  [[nodiscard]] std::vector<int> channels_of(Part p) const;
  /// Throws ConfigError unless there are 12 bones and every part has >= 2.
  void validate() const;
};

/// Joint names used by the standard bone table.
const std::vector<std::string>& standard_joint_names();

/// Joints referenced by `bones` that are absent from `kps`, in table order.
std::vector<std::string> missing_joints(const KeypointSet& kps, const BoneTable& bones);

struct PartSelection {
  bool arms = true;
  bool torso = true;
  bool legs = true;

  static PartSelection all() { return {}; }
  static PartSelection none() { return {false, false, false}; }
  [[nodiscard]] bool enabled(Part p) const;
  void set(Part p, bool on);
  /// Comma separated names; "" or "none" selects nothing, "all" selects all.
  static PartSelection parse(const std::string& list);
  [[nodiscard]] std::vector<std::string> names() const;
};

struct RasterOptions {
  double thickness = 1.5;
  double confidence_threshold = 0.05;
};

/// Default bone half-width for an output of `height` rows (1.5 px at 64).
double default_thickness(int height);

/// Bone maps of shape (1, 12, out_h, out_w) with values in {0, 1}. Keypoints
/// are mapped from their own image size to the output grid; pixel (row, col)
/// sits at (x = col, y = row).
Tensor<float> rasterize(const KeypointSet& kps, const BoneTable& bones, int out_h, int out_w,
                        const RasterOptions& opt = {});

struct PartStacks {
  Tensor<float> arms;
  Tensor<float> torso;
  Tensor<float> legs;

  [[nodiscard]] const Tensor<float>& get(Part p) const;
};

/// Splits a (n, 12, H, W) map into the three part stacks, order preserved.
PartStacks group_parts(const Tensor<float>& skeleton, const BoneTable& bones);

/// Zeroes the channels of deselected parts.
Tensor<float> mask_parts(const Tensor<float>& skeleton, const BoneTable& bones,
                         const PartSelection& sel);

/// Writes one grayscale PNG per bone channel: <prefix>_00.png ... _11.png.
void export_png_stack(const Tensor<float>& skeleton, const std::filesystem::path& prefix);

}  // namespace aagn::skeleton
