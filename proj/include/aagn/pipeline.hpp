// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "aagn/model.hpp"

namespace aagn::service {

struct FlowStats {
  double max = 0.0;   // largest |flow|, pixels
  double mean = 0.0;  // mean |flow|, pixels
};

struct ReshapeResult {
  Portrait image;          // P_p at full resolution
  FlowField flow;          // mu * upsampled flow, full resolution
  FlowField flow_low;      // generator output at model resolution
  int ratio = 1;           // full / model resolution
  std::vector<double> wc;  // W_c, empty when the AAG or CBAM is off
  FlowStats stats;
};

struct ProbeResult {
  affinity::PointAffinity affinity;  // at feature resolution
  int stride = 1;                    // feature cell -> image pixels
  /// Top points mapped to image pixels (row, col, value).
  std::vector<affinity::PointAffinity::Point> pixel_points;
};

FlowStats flow_stats(const FlowField& flow);

/// k x k block average; k must divide both image dimensions.
Portrait area_downsample(const Portrait& img, int k);

/// Immutable inference pipeline around a loaded checkpoint. Safe to call
/// from several threads at once.
class Pipeline {
 public:
  explicit Pipeline(std::unique_ptr<TrainState> state, std::uint64_t checkpoint_hash = 0);
  static Pipeline from_checkpoint(const std::filesystem::path& path);

  [[nodiscard]] const Model& model() const { return *state_->model; }
  [[nodiscard]] std::uint64_t checkpoint_hash() const { return hash_; }

  /// Downsample ratio for a full-resolution image; throws ShapeError when the
  /// image is not an integer multiple of the model input.
  [[nodiscard]] int ratio_for(const Shape& image) const;

  [[nodiscard]] ReshapeResult reshape(const Portrait& image, const skeleton::KeypointSet& kps,
                                      double mu, const skeleton::PartSelection& sel) const;

  [[nodiscard]] ProbeResult affinity_probe(const Portrait& image, const skeleton::KeypointSet& kps,
                                           skeleton::Part part_i, skeleton::Part part_j, int row,
                                           int col, int top_k) const;

 private:
  void check_inputs(const Portrait& image, const skeleton::KeypointSet& kps) const;

  std::shared_ptr<TrainState> state_;
  std::uint64_t hash_;
};

}  // namespace aagn::service
