// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "aagn/warp.hpp"

namespace aagn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Model::Model(const TrainConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  auto aag_cfg = cfg_.model.aag;
  aag_cfg.use_cbam = cfg_.flags.use_cbam;
  auto fg_cfg = cfg_.model.fg;
  fg_cfg.aag_enabled = cfg_.flags.use_aag;

  Rng aag_rng(mix_seed(seed, 11));
  Rng fg_rng(mix_seed(seed, 12));
  Rng bsd_rng(mix_seed(seed, 13));
  aag_ = std::make_unique<affinity::AffinityGraph<float>>(g_params_, aag_cfg,
                                                          skeleton::BoneTable::standard(), aag_rng);
  fg_ = std::make_unique<flowgen::FlowGenerator<float>>(g_params_, fg_cfg, fg_rng);
  bsd_ = std::make_unique<disc::Discriminator<float>>(d_params_, cfg_.model.bsd, bsd_rng);
  perceptual_ = std::make_unique<objectives::PerceptualExtractor<float>>(
      cfg_.model.perceptual_layer, cfg_.model.perceptual_seed);
}

Tensor<float> Model::skeleton_map(const skeleton::KeypointSet& kps) const {
  const int size = cfg_.data.size;
  skeleton::RasterOptions opt;
  opt.thickness = cfg_.model.raster_thickness > 0.0 ? cfg_.model.raster_thickness
                                                    : skeleton::default_thickness(size);
  return skeleton::rasterize(kps, skeleton::BoneTable::standard(), size, size, opt);
}

Model::Output Model::forward(const ag::Var<float>& portrait, const ag::Var<float>& skel) const {
  Output out;
  ag::Var<float> affinity;
  if (cfg_.flags.use_aag) {
    out.aag = aag_->run(skel);
    affinity = out.aag.global;
  }
  out.flow = (*fg_)(portrait, skel, affinity);
  out.warped = warp::backward_warp(portrait, out.flow);
  return out;
}

TrainState::TrainState(const TrainConfig& cfg, std::uint64_t seed)
    : model(std::make_unique<Model>(cfg, seed)) {
  nn::Adam<float>::Options opt;
  opt.lr = cfg.lr;
  g_opt = nn::Adam<float>(model->generator_params(), opt);
  d_opt = nn::Adam<float>(model->discriminator_params(), opt);
}

namespace {

class Writer {
 public:
  template <typename V>
  void pod(const V& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(V));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void floats(const Tensor<float>& t) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    bytes.insert(bytes.end(), p, p + t.size() * sizeof(float));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename V>
  V pod() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(Tensor<float>& t) {
    const std::size_t n = t.size() * sizeof(float);
    need(n);
    std::memcpy(t.data(), bytes_.data() + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_set(Writer& w, const nn::ParamSet<float>& params, const nn::Adam<float>& opt) {
  const auto& items = params.items();
  w.pod(static_cast<std::uint32_t>(items.size()));
  for (const auto& [name, v] : items) {
    w.str(name);
    const Shape s = v.shape();
    w.pod(static_cast<std::int32_t>(s.n));
    w.pod(static_cast<std::int32_t>(s.c));
    w.pod(static_cast<std::int32_t>(s.h));
    w.pod(static_cast<std::int32_t>(s.w));
    w.floats(v.value());
  }
  w.pod(static_cast<std::int64_t>(opt.steps()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    w.floats(opt.first_moments()[i]);
    w.floats(opt.second_moments()[i]);
  }
}

void read_set(Reader& r, nn::ParamSet<float>& params, nn::Adam<float>& opt, const char* what) {
  auto& items = params.items();
  const auto count = r.pod<std::uint32_t>();
  if (count != items.size()) {
    throw FormatError(std::string("checkpoint ") + what + " has " + std::to_string(count) +
                      " parameters, model expects " + std::to_string(items.size()));
  }
  for (auto& [name, v] : items) {
    const std::string stored = r.str();
    if (stored != name) {
      throw FormatError("checkpoint parameter " + stored + " where " + name + " was expected");
    }
    Shape s;
    s.n = r.pod<std::int32_t>();
    s.c = r.pod<std::int32_t>();
    s.h = r.pod<std::int32_t>();
    s.w = r.pod<std::int32_t>();
    if (!(s == v.shape())) {
      throw FormatError("checkpoint parameter " + name + " has shape " + s.str() + ", expected " +
                        v.shape().str());
    }
    r.floats(v.mutable_value());
  }
  opt.set_steps(r.pod<std::int64_t>());
  for (std::size_t i = 0; i < items.size(); ++i) {
    r.floats(opt.first_moments()[i]);
    r.floats(opt.second_moments()[i]);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state) {
  const TrainConfig& cfg = state.model->config();
  Writer w;
  const std::string magic = kCheckpointMagic;
  w.bytes.insert(w.bytes.end(), magic.begin(), magic.end());
  w.pod(config_hash(cfg));
  w.pod(static_cast<std::uint64_t>(state.step));
  w.pod(static_cast<std::uint64_t>(cfg.seed));
  w.str(to_ini(cfg));
  write_set(w, state.model->generator_params(), state.g_opt);
  write_set(w, state.model->discriminator_params(), state.d_opt);
  return std::move(w.bytes);
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto bytes = serialize_checkpoint(state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to checkpoint " + path.string());
}

std::unique_ptr<TrainState> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const std::string magic = kCheckpointMagic;
  if (bytes.size() < magic.size() ||
      std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError("not an AAGNCKPT v1 checkpoint");
  }
  const std::vector<std::uint8_t> body(bytes.begin() + static_cast<std::ptrdiff_t>(magic.size()),
                                       bytes.end());
  Reader r(body);
  const auto hash = r.pod<std::uint64_t>();
  const auto step = r.pod<std::uint64_t>();
  const auto seed = r.pod<std::uint64_t>();
  const TrainConfig cfg = parse_config(r.str());
  if (config_hash(cfg) != hash) throw FormatError("checkpoint config hash mismatch");
  if (cfg.seed != seed) throw FormatError("checkpoint seed does not match its config");
  auto state = std::make_unique<TrainState>(cfg, seed);
  state->step = static_cast<std::int64_t>(step);
  read_set(r, state->model->generator_params(), state->g_opt, "generator");
  read_set(r, state->model->discriminator_params(), state->d_opt, "discriminator");
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return state;
}

std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t bytes_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace aagn
