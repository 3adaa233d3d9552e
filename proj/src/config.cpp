// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace aagn {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

std::vector<int> parse_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item.substr(b, e - b + 1), &used));
      if (used != e - b + 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

template <typename V>
V get(const pt::ptree& tree, const std::string& key, V fallback) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<V, bool>) {
    if (*node == "true" || *node == "1" || *node == "on" || *node == "yes") return true;
    if (*node == "false" || *node == "0" || *node == "off" || *node == "no") return false;
    throw ConfigError("config key " + key + ": '" + *node + "' is not a boolean");
  } else if constexpr (std::is_same_v<V, std::string>) {
    return *node;
  } else {
    V value{};
    const char* begin = node->data();
    const char* end = begin + node->size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ConfigError("config key " + key + ": '" + *node + "' is not a number");
    }
    return value;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (batch <= 0) throw ConfigError("train.batch must be positive");
  if (steps < 0) throw ConfigError("train.steps must be non-negative");
  if (checkpoint_interval < 0 || eval_interval < 0) {
    throw ConfigError("intervals must be non-negative");
  }
  if (weights.flow < 0 || weights.img < 0 || weights.vgg < 0 || weights.adv < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (data.count <= 1) throw ConfigError("data.count must be at least 2");
  if (!(data.holdout > 0.0 && data.holdout < 1.0)) {
    throw ConfigError("data.holdout must lie in (0, 1)");
  }
  if (model.fg.input_h != data.size || model.fg.input_w != data.size) {
    throw ConfigError("model input size must equal data.size");
  }
  if (data.size % affinity::AagConfig::kEncoderStride != 0) {
    throw ConfigError("data.size must be divisible by 4");
  }
  if (downsample < 0) throw ConfigError("infer.downsample must be non-negative");
  model.fg.validate();
  data.spec.validate(data.size, model.fg.max_disp);
}

TrainConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  static const std::vector<std::pair<std::string, std::vector<std::string>>> known{
      {"train", {"lr", "batch", "steps", "seed", "checkpoint_interval", "eval_interval",
                 "out_dir"}},
      {"flags", {"use_aag", "use_cbam", "use_bsd", "use_vgg", "use_img", "mask_pose"}},
      {"loss", {"lambda_flow", "lambda_img", "lambda_vgg", "lambda_adv"}},
      {"data", {"count", "size", "seed", "dir", "holdout", "grid", "max_disp", "sigma",
                "slim_ratio"}},
      {"model", {"fg_channels", "fg_max_disp", "fg_head_gain", "inject_levels", "aag_channels",
                 "aag_hidden", "cbam_reduction", "bsd_channels", "use_srm", "perceptual_layer",
                 "perceptual_seed", "raster_thickness"}},
      {"infer", {"downsample"}},
  };
  for (const auto& [section, body] : tree) {
    auto it = std::find_if(known.begin(), known.end(),
                           [&](const auto& k) { return k.first == section; });
    if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw ConfigError("unknown config key " + section + "." + key);
      }
    }
  }

  TrainConfig c;
  c.lr = get(tree, "train.lr", c.lr);
  c.batch = get(tree, "train.batch", c.batch);
  c.steps = get(tree, "train.steps", c.steps);
  c.seed = get(tree, "train.seed", c.seed);
  c.checkpoint_interval = get(tree, "train.checkpoint_interval", c.checkpoint_interval);
  c.eval_interval = get(tree, "train.eval_interval", c.eval_interval);
  c.out_dir = get(tree, "train.out_dir", c.out_dir);

  auto& f = c.flags;
  f.use_aag = get(tree, "flags.use_aag", f.use_aag);
  f.use_cbam = get(tree, "flags.use_cbam", f.use_cbam);
  f.use_bsd = get(tree, "flags.use_bsd", f.use_bsd);
  f.use_vgg = get(tree, "flags.use_vgg", f.use_vgg);
  f.use_img = get(tree, "flags.use_img", f.use_img);
  f.mask_pose = get(tree, "flags.mask_pose", f.mask_pose);

  c.weights.flow = get(tree, "loss.lambda_flow", c.weights.flow);
  c.weights.img = get(tree, "loss.lambda_img", c.weights.img);
  c.weights.vgg = get(tree, "loss.lambda_vgg", c.weights.vgg);
  c.weights.adv = get(tree, "loss.lambda_adv", c.weights.adv);

  auto& d = c.data;
  d.count = get(tree, "data.count", d.count);
  d.size = get(tree, "data.size", d.size);
  d.seed = get(tree, "data.seed", d.seed);
  d.dir = get(tree, "data.dir", d.dir);
  d.holdout = get(tree, "data.holdout", d.holdout);
  d.spec.grid = get(tree, "data.grid", d.spec.grid);
  d.spec.max_disp = get(tree, "data.max_disp", d.spec.max_disp);
  d.spec.sigma = get(tree, "data.sigma", d.spec.sigma);
  d.spec.slim_ratio = get(tree, "data.slim_ratio", d.spec.slim_ratio);

  auto& m = c.model;
  if (auto s = tree.get_optional<std::string>("model.fg_channels")) {
    m.fg.channels = parse_list("model.fg_channels", *s);
  }
  if (auto s = tree.get_optional<std::string>("model.inject_levels")) {
    m.fg.inject_levels = parse_list("model.inject_levels", *s);
  }
  if (auto s = tree.get_optional<std::string>("model.bsd_channels")) {
    m.bsd.channels = parse_list("model.bsd_channels", *s);
  }
  m.fg.max_disp = get(tree, "model.fg_max_disp", m.fg.max_disp);
  m.fg.head_gain = get(tree, "model.fg_head_gain", m.fg.head_gain);
  m.fg.input_h = d.size;
  m.fg.input_w = d.size;
  m.aag.feature_channels = get(tree, "model.aag_channels", m.aag.feature_channels);
  m.aag.hidden_channels = get(tree, "model.aag_hidden", m.aag.hidden_channels);
  m.aag.cbam_reduction = get(tree, "model.cbam_reduction", m.aag.cbam_reduction);
  m.bsd.use_srm = get(tree, "model.use_srm", m.bsd.use_srm);
  m.perceptual_layer = get(tree, "model.perceptual_layer", m.perceptual_layer);
  m.perceptual_seed = get(tree, "model.perceptual_seed", m.perceptual_seed);
  m.raster_thickness = get(tree, "model.raster_thickness", m.raster_thickness);

  c.downsample = get(tree, "infer.downsample", c.downsample);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const TrainConfig& c) {
  std::ostringstream o;
  o << "[train]\n"
    << "lr = " << fmt(c.lr) << "\n"
    << "batch = " << c.batch << "\n"
    << "steps = " << c.steps << "\n"
    << "seed = " << c.seed << "\n"
    << "checkpoint_interval = " << c.checkpoint_interval << "\n"
    << "eval_interval = " << c.eval_interval << "\n"
    << "out_dir = " << c.out_dir << "\n\n";
  o << "[flags]\n"
    << "use_aag = " << fmt(c.flags.use_aag) << "\n"
    << "use_cbam = " << fmt(c.flags.use_cbam) << "\n"
    << "use_bsd = " << fmt(c.flags.use_bsd) << "\n"
    << "use_vgg = " << fmt(c.flags.use_vgg) << "\n"
    << "use_img = " << fmt(c.flags.use_img) << "\n"
    << "mask_pose = " << fmt(c.flags.mask_pose) << "\n\n";
  o << "[loss]\n"
    << "lambda_flow = " << fmt(c.weights.flow) << "\n"
    << "lambda_img = " << fmt(c.weights.img) << "\n"
    << "lambda_vgg = " << fmt(c.weights.vgg) << "\n"
    << "lambda_adv = " << fmt(c.weights.adv) << "\n\n";
  o << "[data]\n"
    << "count = " << c.data.count << "\n"
    << "size = " << c.data.size << "\n"
    << "seed = " << c.data.seed << "\n";
  if (!c.data.dir.empty()) o << "dir = " << c.data.dir << "\n";
  o << "holdout = " << fmt(c.data.holdout) << "\n"
    << "grid = " << c.data.spec.grid << "\n"
    << "max_disp = " << fmt(c.data.spec.max_disp) << "\n"
    << "sigma = " << fmt(c.data.spec.sigma) << "\n"
    << "slim_ratio = " << fmt(c.data.spec.slim_ratio) << "\n\n";
  const auto& m = c.model;
  o << "[model]\n"
    << "fg_channels = " << fmt(m.fg.channels) << "\n"
    << "fg_max_disp = " << fmt(m.fg.max_disp) << "\n"
    << "fg_head_gain = " << fmt(m.fg.head_gain) << "\n"
    << "inject_levels = " << fmt(m.fg.inject_levels) << "\n"
    << "aag_channels = " << m.aag.feature_channels << "\n"
    << "aag_hidden = " << m.aag.hidden_channels << "\n"
    << "cbam_reduction = " << m.aag.cbam_reduction << "\n"
    << "bsd_channels = " << fmt(m.bsd.channels) << "\n"
    << "use_srm = " << fmt(m.bsd.use_srm) << "\n"
    << "perceptual_layer = " << m.perceptual_layer << "\n"
    << "perceptual_seed = " << m.perceptual_seed << "\n"
    << "raster_thickness = " << fmt(m.raster_thickness) << "\n\n";
  o << "[infer]\n"
    << "downsample = " << c.downsample << "\n";
  return o.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.flags = AblationFlags{};
  c.steps = 0;
  c.checkpoint_interval = 0;
  c.eval_interval = 0;
  c.out_dir.clear();
  const std::string text = to_ini(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool* flag_by_name(AblationFlags& flags, const std::string& name) {
  const std::string n = name.rfind("use_", 0) == 0 ? name.substr(4) : name;
  if (n == "aag") return &flags.use_aag;
  if (n == "cbam") return &flags.use_cbam;
  if (n == "bsd") return &flags.use_bsd;
  if (n == "vgg") return &flags.use_vgg;
  if (n == "img") return &flags.use_img;
  if (n == "mask_pose") return &flags.mask_pose;
  return nullptr;
}

}  // namespace aagn
