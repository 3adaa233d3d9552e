// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aagn/image_io.hpp"

namespace aagn::skeleton {

std::string part_name(Part p) {
  switch (p) {
    case Part::arms: return "arms";
    case Part::torso: return "torso";
    case Part::legs: return "legs";
  }
  return "?";
}

Part parse_part(const std::string& name) {
  if (name == "arms") return Part::arms;
  if (name == "torso") return Part::torso;
  if (name == "legs") return Part::legs;
  throw ConfigError("unknown body part '" + name + "' (expected arms, torso or legs)");
}

const Joint* KeypointSet::find(const std::string& name) const {
  for (const auto& j : joints) {
    if (j.name == name) return &j;
  }
  return nullptr;
}

KeypointSet KeypointSet::rescaled(int h, int w) const {
  KeypointSet out = *this;
  const double sy = static_cast<double>(h) / height;
  const double sx = static_cast<double>(w) / width;
  for (auto& j : out.joints) {
    j.x *= sx;
    j.y *= sy;
  }
  out.height = h;
  out.width = w;
  return out;
}

KeypointSet KeypointSet::from_json(const nlohmann::json& j) {
  KeypointSet kps;
  try {
    const auto& size = j.at("image_size");
    kps.height = size.at(0).get<int>();
    kps.width = size.at(1).get<int>();
    for (const auto& [name, v] : j.at("joints").items()) {
      if (!v.is_array() || v.size() < 2) {
        throw FormatError("joint '" + name + "' must be [x, y, conf]");
      }
      Joint jt{name, v.at(0).get<double>(), v.at(1).get<double>(),
               v.size() > 2 ? v.at(2).get<double>() : 1.0};
      kps.joints.push_back(jt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed keypoint JSON: ") + e.what());
  }
  if (kps.height <= 0 || kps.width <= 0) throw FormatError("keypoint image_size must be positive");
  return kps;
}

nlohmann::json KeypointSet::to_json() const {
  nlohmann::json joints_obj = nlohmann::json::object();
  for (const auto& jt : joints) joints_obj[jt.name] = {jt.x, jt.y, jt.confidence};
  return {{"image_size", {height, width}}, {"joints", joints_obj}};
}

KeypointSet KeypointSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open keypoint file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("keypoint file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void KeypointSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

const std::vector<std::string>& standard_joint_names() {
  static const std::vector<std::string> names{
      "head",  "neck",  "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
      "r_wrist", "l_hip", "r_hip",    "l_knee",     "r_knee",  "l_ankle", "r_ankle"};
  return names;
}

BoneTable BoneTable::standard() {
  return BoneTable{{
      {"l_shoulder", "l_elbow", Part::arms},
      {"l_elbow", "l_wrist", Part::arms},
      {"r_shoulder", "r_elbow", Part::arms},
      {"r_elbow", "r_wrist", Part::arms},
      {"neck", "head", Part::torso},
      {"neck", "l_hip", Part::torso},
      {"neck", "r_hip", Part::torso},
      {"l_hip", "r_hip", Part::torso},
      {"l_hip", "l_knee", Part::legs},
      {"l_knee", "l_ankle", Part::legs},
      {"r_hip", "r_knee", Part::legs},
      {"r_knee", "r_ankle", Part::legs},
  }};
}

std::vector<int> BoneTable::channels_of(Part p) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < bones.size(); ++i) {
    if (bones[i].part == p) out.push_back(static_cast<int>(i));
  }
  return out;
}

void BoneTable::validate() const {
  if (bones.size() != kNumBones) {
    throw ConfigError("bone table must have 12 entries, has " + std::to_string(bones.size()));
  }
  for (Part p : kAllParts) {
    if (channels_of(p).size() < 2) {
      throw ConfigError("bone table assigns fewer than 2 bones to " + part_name(p));
    }
  }
}

std::vector<std::string> missing_joints(const KeypointSet& kps, const BoneTable& bones) {
  std::vector<std::string> missing;
  auto note = [&](const std::string& n) {
    if (!kps.find(n) && std::find(missing.begin(), missing.end(), n) == missing.end()) {
      missing.push_back(n);
    }
  };
  for (const auto& b : bones.bones) {
    note(b.joint_a);
    note(b.joint_b);
  }
  return missing;
}

bool PartSelection::enabled(Part p) const {
  switch (p) {
    case Part::arms: return arms;
    case Part::torso: return torso;
    case Part::legs: return legs;
  }
  return false;
}

void PartSelection::set(Part p, bool on) {
  switch (p) {
    case Part::arms: arms = on; break;
    case Part::torso: torso = on; break;
    case Part::legs: legs = on; break;
  }
}

PartSelection PartSelection::parse(const std::string& list) {
  if (list == "all") return all();
  PartSelection sel = none();
  if (list.empty() || list == "none") return sel;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    sel.set(parse_part(item), true);
  }
  return sel;
}

std::vector<std::string> PartSelection::names() const {
  std::vector<std::string> out;
  for (Part p : kAllParts) {
    if (enabled(p)) out.push_back(part_name(p));
  }
  return out;
}

double default_thickness(int height) { return 1.5 * height / 64.0; }

Tensor<float> rasterize(const KeypointSet& kps, const BoneTable& bones, int out_h, int out_w,
                        const RasterOptions& opt) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("rasterize: output size must be positive");
  if (!(opt.thickness >= 0.5)) throw RangeError("rasterize: thickness must be >= 0.5");
  if (kps.height <= 0 || kps.width <= 0) throw ShapeError("rasterize: keypoint image size unset");
  const int channels = static_cast<int>(bones.bones.size());
  Tensor<float> out(Shape{1, channels, out_h, out_w});
  const double sy = static_cast<double>(out_h) / kps.height;
  const double sx = static_cast<double>(out_w) / kps.width;
  const double r = opt.thickness;
  const double r2 = r * r;

  for (int c = 0; c < channels; ++c) {
    const Bone& bone = bones.bones[static_cast<std::size_t>(c)];
    const Joint* a = kps.find(bone.joint_a);
    const Joint* b = kps.find(bone.joint_b);
    if (!a || !b) {
      throw ConfigError("bone " + std::to_string(c) + " references unknown joint '" +
                        (!a ? bone.joint_a : bone.joint_b) + "'");
    }
    if (a->confidence < opt.confidence_threshold || b->confidence < opt.confidence_threshold) {
      continue;
    }
    const double ax = a->x * sx, ay = a->y * sy;
    const double bx = b->x * sx, by = b->y * sy;
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    // Only pixels in the segment's bounding box grown by r can be within r.
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r)));
    const int y1 = std::min(out_h - 1, static_cast<int>(std::ceil(std::max(ay, by) + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r)));
    const int x1 = std::min(out_w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r)));
    float* plane = out.plane(0, c);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double t = 0.0;
        if (len2 > 0.0) t = std::clamp(((x - ax) * dx + (y - ay) * dy) / len2, 0.0, 1.0);
        const double ex = x - (ax + t * dx);
        const double ey = y - (ay + t * dy);
        if (ex * ex + ey * ey <= r2) plane[y * out_w + x] = 1.0f;
      }
    }
  }
  return out;
}

const Tensor<float>& PartStacks::get(Part p) const {
  switch (p) {
    case Part::arms: return arms;
    case Part::torso: return torso;
    case Part::legs: return legs;
  }
  return arms;
}

PartStacks group_parts(const Tensor<float>& skeleton, const BoneTable& bones) {
  const Shape s = skeleton.shape();
  if (s.c != static_cast<int>(bones.bones.size())) {
    throw ShapeError("group_parts: skeleton has " + std::to_string(s.c) +
                     " channels, bone table " + std::to_string(bones.bones.size()));
  }
  auto take = [&](Part p) {
    const auto chans = bones.channels_of(p);
    if (chans.empty()) throw ConfigError("group_parts: no bones for " + part_name(p));
    Tensor<float> out(Shape{s.n, static_cast<int>(chans.size()), s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t k = 0; k < chans.size(); ++k) {
        const float* src = skeleton.plane(n, chans[k]);
        std::copy(src, src + s.plane(), out.plane(n, static_cast<int>(k)));
      }
    }
    return out;
  };
  return PartStacks{take(Part::arms), take(Part::torso), take(Part::legs)};
}

Tensor<float> mask_parts(const Tensor<float>& skeleton, const BoneTable& bones,
                         const PartSelection& sel) {
  const Shape s = skeleton.shape();
  if (s.c != static_cast<int>(bones.bones.size())) {
    throw ShapeError("mask_parts: channel count does not match bone table");
  }
  Tensor<float> out = skeleton;
  for (int c = 0; c < s.c; ++c) {
    if (sel.enabled(bones.bones[static_cast<std::size_t>(c)].part)) continue;
    for (int n = 0; n < s.n; ++n) std::fill(out.plane(n, c), out.plane(n, c) + s.plane(), 0.0f);
  }
  return out;
}

void export_png_stack(const Tensor<float>& skeleton, const std::filesystem::path& prefix) {
  for (int c = 0; c < skeleton.shape().c; ++c) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "_%02d.png", c);
    save_plane_png(prefix.string() + suffix, skeleton, 0, c);
  }
}

}  // namespace aagn::skeleton
