// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#include "aagn/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "aagn/metrics.hpp"

namespace aagn::trainer {

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Tensor<float> stack(const std::vector<const Tensor<float>*>& parts) {
  Shape s = parts.front()->shape();
  const std::size_t each = s.numel();
  s.n = static_cast<int>(parts.size());
  Tensor<float> out(s);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_same_shape(parts[i]->shape(), parts.front()->shape(), "batch");
    std::memcpy(out.data() + i * each, parts[i]->data(), each * sizeof(float));
  }
  return out;
}

Tensor<float> take(const Tensor<float>& batch, int n) {
  Shape s = batch.shape();
  const std::size_t each = static_cast<std::size_t>(s.c) * s.plane();
  s.n = 1;
  Tensor<float> out(s);
  std::memcpy(out.data(), batch.data() + static_cast<std::size_t>(n) * each, each * sizeof(float));
  return out;
}

struct Batch {
  ag::Var<float> portrait, skeleton, flow, target;
};

Batch make_batch(const std::vector<const synthetic::SyntheticSample*>& samples,
                 const std::vector<const Tensor<float>*>& skeletons, bool mask_pose) {
  std::vector<const Tensor<float>*> p, f, t;
  for (const auto* smp : samples) {
    p.push_back(&smp->source);
    f.push_back(&smp->flow);
    t.push_back(&smp->target);
  }
  Batch b;
  b.portrait = ops::constant(stack(p));
  Tensor<float> skel = stack(skeletons);
  if (mask_pose) skel.fill(0.0f);
  b.skeleton = ops::constant(std::move(skel));
  b.flow = ops::constant(stack(f));
  b.target = ops::constant(stack(t));
  return b;
}

double scalar(const ag::Var<float>& v) { return static_cast<double>(v.value()[0]); }

}  // namespace

std::string csv_row(const LossRecord& r) {
  return std::to_string(r.step) + "," + num(r.flow) + "," + num(r.img) + "," + num(r.vgg) + "," +
         num(r.adv_g) + "," + num(r.adv_d) + "," + num(r.total);
}

std::string csv_row(const EvalRecord& r) {
  return std::to_string(r.step) + "," + num(r.epe) + "," + num(r.ssim) + "," + num(r.psnr) + "," +
         num(r.perceptual) + "," + num(r.ssim_identity);
}

std::string csv_row(const ImageMetrics& m) {
  return std::to_string(m.id) + "," + num(m.ssim) + "," + num(m.psnr) + "," + num(m.perceptual) +
         "," + num(m.epe);
}

int train_count(int total, double holdout) {
  const int held = std::max(1, static_cast<int>(std::ceil(total * holdout)));
  if (held >= total) throw ConfigError("holdout leaves no training samples");
  return total - held;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<synthetic::SyntheticSample> data)
    : state_(std::make_unique<TrainState>(cfg, cfg.seed)), data_(std::move(data)) {
  prepare();
}

Trainer::Trainer(std::unique_ptr<TrainState> state, std::vector<synthetic::SyntheticSample> data)
    : state_(std::move(state)), data_(std::move(data)) {
  prepare();
}

void Trainer::prepare() {
  const auto& cfg = config();
  if (data_.size() < 2) throw ConfigError("training needs at least 2 samples");
  n_train_ = train_count(static_cast<int>(data_.size()), cfg.data.holdout);
  if (cfg.batch > n_train_) {
    throw ConfigError("batch " + std::to_string(cfg.batch) + " exceeds the " +
                      std::to_string(n_train_) + " training samples");
  }
  skeletons_.clear();
  for (const auto& s : data_) {
    if (s.source.shape().h != cfg.data.size || s.source.shape().w != cfg.data.size) {
      throw ShapeError("dataset sample " + s.source.shape().str() + " does not match data.size " +
                       std::to_string(cfg.data.size));
    }
    skeletons_.push_back(state_->model->skeleton_map(s.kps));
  }
}

std::vector<int> Trainer::batch_indices(std::int64_t step) const {
  Rng rng(mix_seed(config().seed, 0x1000000ULL + static_cast<std::uint64_t>(step)));
  std::vector<int> pool(static_cast<std::size_t>(n_train_));
  for (int i = 0; i < n_train_; ++i) pool[static_cast<std::size_t>(i)] = i;
  const int b = config().batch;
  for (int i = 0; i < b; ++i) {
    const int j = rng.uniform_int(i, n_train_ - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(b));
  return pool;
}

LossRecord Trainer::step() {
  const auto& cfg = config();
  const auto& flags = cfg.flags;
  Model& m = *state_->model;
  LossRecord rec;
  rec.step = state_->step;
  const std::string where = "step " + std::to_string(rec.step) + ": ";

  std::vector<const synthetic::SyntheticSample*> samples;
  std::vector<const Tensor<float>*> skels;
  for (int i : batch_indices(rec.step)) {
    samples.push_back(&data_[static_cast<std::size_t>(i)]);
    skels.push_back(&skeletons_[static_cast<std::size_t>(i)]);
  }
  const Batch b = make_batch(samples, skels, flags.mask_pose);
  const auto out = m.forward(b.portrait, b.skeleton);

  try {
    if (flags.use_bsd) {
      auto& d_params = m.discriminator_params();
      d_params.zero_grad();
      const auto d_fake = m.discriminator().probability(out.warped.detach());
      const auto d_real = m.discriminator().probability(b.target);
      const auto ld = objectives::adv_loss_d(d_fake, d_real);
      rec.adv_d = scalar(ld);
      if (!std::isfinite(rec.adv_d)) throw NumericError("non-finite loss component L_adv_d");
      ag::backward(ld);
      state_->d_opt.step(d_params);
    }

    auto& g_params = m.generator_params();
    g_params.zero_grad();
    objectives::LossTerms<float> terms;
    terms.flow = objectives::flow_loss(b.flow, out.flow);
    if (flags.use_img) terms.img = objectives::img_loss(b.target, out.warped);
    if (flags.use_vgg) terms.vgg = objectives::vgg_loss(b.target, out.warped, m.perceptual());
    if (flags.use_bsd) {
      terms.adv = objectives::adv_loss_g(m.discriminator().probability(out.warped));
    }
    const auto total = objectives::total_loss(terms, cfg.weights);
    rec.flow = scalar(terms.flow);
    if (terms.img.defined()) rec.img = scalar(terms.img);
    if (terms.vgg.defined()) rec.vgg = scalar(terms.vgg);
    if (terms.adv.defined()) rec.adv_g = scalar(terms.adv);
    rec.total = scalar(total);
    ag::backward(total);
    state_->g_opt.step(g_params);
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  }
  ++state_->step;
  return rec;
}

std::vector<ImageMetrics> evaluate_samples(const Model& model,
                                           const std::vector<synthetic::SyntheticSample>& data,
                                           int begin, int end) {
  ag::NoGradGuard no_grad;
  const auto& cfg = model.config();
  std::vector<ImageMetrics> out;
  for (int start = begin; start < end; start += cfg.batch) {
    const int stop = std::min(end, start + cfg.batch);
    std::vector<int> idx;
    std::vector<const synthetic::SyntheticSample*> samples;
    std::vector<Tensor<float>> skels;
    for (int i = start; i < stop; ++i) {
      idx.push_back(i);
      samples.push_back(&data[static_cast<std::size_t>(i)]);
      skels.push_back(model.skeleton_map(data[static_cast<std::size_t>(i)].kps));
    }
    std::vector<const Tensor<float>*> skel_ptrs;
    for (const auto& t : skels) skel_ptrs.push_back(&t);
    const Batch b = make_batch(samples, skel_ptrs, cfg.flags.mask_pose);
    const auto fwd = model.forward(b.portrait, b.skeleton);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& smp = data[static_cast<std::size_t>(idx[k])];
      const Portrait pred = take(fwd.warped.value(), static_cast<int>(k));
      const FlowField flow = take(fwd.flow.value(), static_cast<int>(k));
      ImageMetrics im;
      im.id = idx[k];
      im.ssim = metrics::ssim(pred, smp.target);
      im.psnr = metrics::psnr(pred, smp.target);
      im.perceptual = metrics::perceptual_distance(pred, smp.target, model.perceptual());
      im.epe = metrics::epe(flow, smp.flow);
      out.push_back(im);
    }
  }
  return out;
}

std::vector<ImageMetrics> Trainer::evaluate_range(int begin, int end) const {
  return evaluate_samples(*state_->model, data_, begin, end);
}

EvalRecord Trainer::evaluate() const {
  const int total = static_cast<int>(data_.size());
  const auto per = evaluate_range(n_train_, total);
  EvalRecord r;
  r.step = state_->step;
  for (const auto& m : per) {
    r.epe += m.epe;
    r.ssim += m.ssim;
    r.psnr += m.psnr;
    r.perceptual += m.perceptual;
  }
  for (int i = n_train_; i < total; ++i) {
    const auto& s = data_[static_cast<std::size_t>(i)];
    r.ssim_identity += metrics::ssim(s.source, s.target);
  }
  const double n = static_cast<double>(per.size());
  r.epe /= n;
  r.ssim /= n;
  r.psnr /= n;
  r.perceptual /= n;
  r.ssim_identity /= n;
  return r;
}

std::unique_ptr<TrainState> resume_state(const TrainConfig& cfg,
                                         const std::filesystem::path& checkpoint) {
  auto saved = load_checkpoint(checkpoint);
  const TrainConfig& old = saved->model->config();
  if (config_hash(old) != config_hash(cfg) || !(old.flags == cfg.flags)) {
    throw ConfigError("checkpoint " + checkpoint.string() +
                      " was trained with a different configuration");
  }
  TrainConfig merged = old;
  merged.steps = cfg.steps;
  merged.eval_interval = cfg.eval_interval;
  merged.checkpoint_interval = cfg.checkpoint_interval;
  merged.out_dir = cfg.out_dir;
  auto state = std::make_unique<TrainState>(merged, merged.seed);
  state->model->generator_params().copy_values_from(saved->model->generator_params());
  state->model->discriminator_params().copy_values_from(saved->model->discriminator_params());
  state->g_opt = saved->g_opt;
  state->d_opt = saved->d_opt;
  state->step = saved->step;
  return state;
}

std::vector<synthetic::SyntheticSample> dataset_for(const TrainConfig& cfg) {
  if (!cfg.data.dir.empty()) {
    auto data = synthetic::load_dataset(cfg.data.dir);
    if (static_cast<int>(data.size()) != cfg.data.count) {
      throw ConfigError("dataset " + cfg.data.dir + " has " + std::to_string(data.size()) +
                        " samples, config expects " + std::to_string(cfg.data.count));
    }
    return data;
  }
  auto spec = cfg.data.spec;
  spec.seed = cfg.data.seed;
  return synthetic::make_dataset(cfg.data.seed, cfg.data.count, spec, cfg.data.size);
}

RunResult run(Trainer& trainer, const RunOptions& opt) {
  const auto& cfg = trainer.config();
  RunResult res;
  const std::filesystem::path dir = cfg.out_dir;
  std::ofstream loss_csv, eval_csv;
  if (opt.write_files) {
    std::filesystem::create_directories(dir);
    const bool resumed = trainer.state().step > 0;
    const auto mode = resumed ? std::ios::app : std::ios::trunc;
    loss_csv.open(dir / "loss.csv", std::ios::out | mode);
    eval_csv.open(dir / "eval.csv", std::ios::out | mode);
    if (!loss_csv || !eval_csv) throw FormatError("cannot write logs under " + dir.string());
    if (!resumed) {
      loss_csv << kLossCsvHeader << "\n";
      eval_csv << kEvalCsvHeader << "\n";
    }
  }
  auto do_eval = [&] {
    const auto e = trainer.evaluate();
    res.evals.push_back(e);
    if (opt.write_files) eval_csv << csv_row(e) << "\n" << std::flush;
    if (opt.on_eval) opt.on_eval(e);
  };
  auto do_ckpt = [&](const std::string& name) {
    res.final_checkpoint = dir / name;
    save_checkpoint(res.final_checkpoint, trainer.state());
  };

  if (cfg.eval_interval > 0 || trainer.state().step == 0) do_eval();
  while (trainer.state().step < cfg.steps) {
    const auto rec = trainer.step();
    res.losses.push_back(rec);
    if (opt.write_files) loss_csv << csv_row(rec) << "\n";
    if (opt.on_step) opt.on_step(rec);
    const auto s = trainer.state().step;
    if (s == cfg.steps) break;
    if (cfg.eval_interval > 0 && s % cfg.eval_interval == 0) do_eval();
    if (opt.write_files && cfg.checkpoint_interval > 0 && s % cfg.checkpoint_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.aagn", static_cast<long long>(s));
      do_ckpt(name);
    }
  }
  if (res.evals.empty() || res.evals.back().step != trainer.state().step) do_eval();
  if (opt.write_files) {
    loss_csv.flush();
    do_ckpt("final.aagn");
  }
  return res;
}

std::vector<AblationRow> ablation_run(const TrainConfig& base, const std::vector<std::string>& axes,
                                      const std::vector<synthetic::SyntheticSample>& data,
                                      const std::function<void(const AblationRow&)>& on_row) {
  if (axes.empty()) throw ConfigError("ablation needs at least one axis");
  if (axes.size() > 6) throw ConfigError("ablation supports at most 6 axes");
  AblationFlags probe;
  for (const auto& a : axes) {
    if (!flag_by_name(probe, a)) throw ConfigError("unknown ablation axis '" + a + "'");
  }
  std::vector<AblationRow> rows;
  const int combos = 1 << axes.size();
  for (int mask = 0; mask < combos; ++mask) {
    TrainConfig cfg = base;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      *flag_by_name(cfg.flags, axes[i]) = ((mask >> i) & 1) != 0;
    }
    cfg.out_dir = (std::filesystem::path(base.out_dir) / ("exp" + std::to_string(mask + 1))).string();
    Trainer t(cfg, data);
    RunOptions opt;
    opt.write_files = false;
    const auto res = run(t, opt);
    AblationRow row;
    row.label = "Exp " + std::to_string(mask + 1);
    row.flags = cfg.flags;
    row.seed = cfg.seed;
    row.config_hash = hash_hex(config_hash(cfg));
    row.result = res.evals.back();
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<std::string>& axes,
                          const std::vector<AblationRow>& rows) {
  out << "| Exp |";
  for (const auto& a : axes) out << " " << a << " |";
  out << " SSIM | PSNR | perceptual | EPE | seed | config_hash |\n|---|";
  for (std::size_t i = 0; i < axes.size(); ++i) out << "---|";
  out << "---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    AblationFlags f = r.flags;
    out << "| " << r.label.substr(4) << " |";
    for (const auto& a : axes) out << " " << (*flag_by_name(f, a) ? "on" : "off") << " |";
    out << std::fixed << std::setprecision(4) << " " << r.result.ssim << " | "
        << metrics::format_psnr(r.result.psnr) << " | " << r.result.perceptual << " | "
        << r.result.epe << " | " << r.seed << " | " << r.config_hash << " |\n";
    out.unsetf(std::ios::floatfield);
  }
}

}  // namespace aagn::trainer
