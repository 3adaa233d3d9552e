// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "aagn/warp.hpp"

namespace aagn::service {

FlowStats flow_stats(const FlowField& flow) {
  check_flow(flow.shape(), "flow_stats");
  FlowStats st;
  const Shape s = flow.shape();
  double sum = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const float* fx = flow.plane(n, 0);
    const float* fy = flow.plane(n, 1);
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const double m = std::hypot(static_cast<double>(fx[p]), static_cast<double>(fy[p]));
      st.max = std::max(st.max, m);
      sum += m;
    }
  }
  st.mean = sum / static_cast<double>(s.n * s.plane());
  return st;
}

Portrait area_downsample(const Portrait& img, int k) {
  const Shape s = img.shape();
  if (k <= 0 || s.h % k != 0 || s.w % k != 0) {
    throw ShapeError("area_downsample: " + s.str() + " not divisible by " + std::to_string(k));
  }
  if (k == 1) return img;
  Portrait out(Shape{s.n, s.c, s.h / k, s.w / k});
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = img.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < s.h / k; ++y) {
        for (int x = 0; x < s.w / k; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) acc += src[(y * k + dy) * s.w + x * k + dx];
          }
          dst[y * (s.w / k) + x] = static_cast<float>(acc * inv);
        }
      }
    }
  }
  return out;
}

Pipeline::Pipeline(std::unique_ptr<TrainState> state, std::uint64_t checkpoint_hash)
    : state_(std::move(state)), hash_(checkpoint_hash) {
  if (!state_) throw ConfigError("pipeline needs a model");
}

Pipeline Pipeline::from_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return Pipeline(deserialize_checkpoint(bytes), bytes_hash(bytes));
}

int Pipeline::ratio_for(const Shape& image) const {
  const auto& cfg = model().config();
  const int in_h = cfg.model.fg.input_h;
  const int in_w = cfg.model.fg.input_w;
  const int k = cfg.downsample > 0 ? cfg.downsample : image.h / in_h;
  if (k <= 0 || image.h != k * in_h || image.w != k * in_w) {
    throw ShapeError("image " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                     " is not " + (cfg.downsample > 0 ? std::to_string(k) : std::string("an integer")) +
                     " times the " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                     " model input");
  }
  return k;
}

void Pipeline::check_inputs(const Portrait& image, const skeleton::KeypointSet& kps) const {
  check_portrait(image.shape(), "reshape");
  if (image.shape().n != 1) throw ShapeError("reshape takes a single image");
  const auto missing = skeleton::missing_joints(kps, skeleton::BoneTable::standard());
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("missing keypoints: " + list);
  }
  if (kps.height != image.shape().h || kps.width != image.shape().w) {
    throw ShapeError("keypoints are for a " + std::to_string(kps.height) + "x" +
                     std::to_string(kps.width) + " image, got " + image.shape().str());
  }
}

ReshapeResult Pipeline::reshape(const Portrait& image, const skeleton::KeypointSet& kps, double mu,
                                const skeleton::PartSelection& sel) const {
  if (!(std::abs(mu) <= 1.0)) {
    throw RangeError("strength mu must lie in [-1, 1], got " + std::to_string(mu));
  }
  check_inputs(image, kps);
  ag::NoGradGuard no_grad;
  const Model& m = model();
  ReshapeResult res;
  res.ratio = ratio_for(image.shape());

  const Portrait low = area_downsample(image, res.ratio);
  Tensor<float> skel = m.skeleton_map(kps);
  skel = skeleton::mask_parts(skel, skeleton::BoneTable::standard(), sel);
  if (m.config().flags.mask_pose) skel.fill(0.0f);

  const auto out = m.forward(ops::constant(low), ops::constant(std::move(skel)));
  res.flow_low = out.flow.value();
  if (out.aag.weights) {
    for (float w : out.aag.weights->value().values()) res.wc.push_back(w);
  }
  res.flow = warp::apply_strength(warp::upsample_flow(res.flow_low, res.ratio), mu);
  res.image = warp::backward_warp(image, res.flow);
  res.stats = flow_stats(res.flow);
  return res;
}

ProbeResult Pipeline::affinity_probe(const Portrait& image, const skeleton::KeypointSet& kps,
                                     skeleton::Part part_i, skeleton::Part part_j, int row,
                                     int col, int top_k) const {
  check_inputs(image, kps);
  ag::NoGradGuard no_grad;
  const Model& m = model();
  const int ratio = ratio_for(image.shape());
  const auto feats = m.aag().encode_parts(ops::constant(m.skeleton_map(kps)));
  const int i = static_cast<int>(part_i);
  const int j = static_cast<int>(part_j);
  ProbeResult res;
  res.affinity = affinity::point_affinity(feats[static_cast<std::size_t>(i)].value(),
                                          feats[static_cast<std::size_t>(j)].value(),
                                          m.aag().projection(i, j), row, col, top_k);
  res.stride = affinity::AagConfig::kEncoderStride * ratio;
  for (const auto& p : res.affinity.top) {
    res.pixel_points.push_back({p.row * res.stride, p.col * res.stride, p.value});
  }
  return res;
}

}  // namespace aagn::service
