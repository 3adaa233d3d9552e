// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "aagn/model.hpp"
#include "aagn/synthetic.hpp"

namespace aagn::trainer {

struct LossRecord {
  std::int64_t step = 0;
  double flow = 0.0;
  double img = 0.0;
  double vgg = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double total = 0.0;
};

/// Held-out means. ssim_identity is SSIM(P_o, P_t), the do-nothing baseline.
struct EvalRecord {
  std::int64_t step = 0;
  double epe = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  double perceptual = 0.0;
  double ssim_identity = 0.0;
};

struct ImageMetrics {
  int id = 0;
  double ssim = 0.0;
  double psnr = 0.0;
  double perceptual = 0.0;
  double epe = 0.0;
};

inline constexpr const char* kLossCsvHeader = "step,L_flow,L_img,L_vgg,L_adv_g,L_adv_d,total";
inline constexpr const char* kEvalCsvHeader = "step,epe,ssim,psnr,perceptual,ssim_identity";
inline constexpr const char* kImageCsvHeader = "image_id,ssim,psnr,perceptual,epe";

std::string csv_row(const LossRecord& r);
std::string csv_row(const EvalRecord& r);
std::string csv_row(const ImageMetrics& m);

/// Samples [0, train_count) train, the rest are held out.
int train_count(int total, double holdout);

/// Owns the training state and the prepared dataset.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<synthetic::SyntheticSample> data);
  /// Continues from a restored state; the dataset must be the same one.
  Trainer(std::unique_ptr<TrainState> state, std::vector<synthetic::SyntheticSample> data);

  [[nodiscard]] const TrainConfig& config() const { return state_->model->config(); }
  [[nodiscard]] TrainState& state() { return *state_; }
  [[nodiscard]] const TrainState& state() const { return *state_; }
  [[nodiscard]] int train_size() const { return n_train_; }
  [[nodiscard]] int holdout_size() const { return static_cast<int>(data_.size()) - n_train_; }

  /// Training sample indices of `step`; a pure function of (seed, step).
  [[nodiscard]] std::vector<int> batch_indices(std::int64_t step) const;

  /// One discriminator update (when use_bsd) followed by one generator update.
  LossRecord step();
  [[nodiscard]] EvalRecord evaluate() const;
  /// Per-sample metrics for samples [begin, end).
  [[nodiscard]] std::vector<ImageMetrics> evaluate_range(int begin, int end) const;

 private:
  void prepare();

  std::unique_ptr<TrainState> state_;
  std::vector<synthetic::SyntheticSample> data_;
  std::vector<Tensor<float>> skeletons_;
  int n_train_ = 0;
};

/// Per-sample metrics of a model on a dataset (no training state needed).
std::vector<ImageMetrics> evaluate_samples(const Model& model,
                                           const std::vector<synthetic::SyntheticSample>& data,
                                           int begin, int end);

/// Restores a checkpoint for continued training under `cfg`. The model and
/// optimiser come from the checkpoint; steps, intervals and out_dir from `cfg`.
/// Throws ConfigError when the two configurations describe different runs.
std::unique_ptr<TrainState> resume_state(const TrainConfig& cfg,
                                         const std::filesystem::path& checkpoint);

/// Loads data.dir when set, otherwise generates data.count samples.
std::vector<synthetic::SyntheticSample> dataset_for(const TrainConfig& cfg);

struct RunResult {
  std::vector<LossRecord> losses;
  std::vector<EvalRecord> evals;
  std::filesystem::path final_checkpoint;
};

struct RunOptions {
  bool write_files = true;  // CSV logs and checkpoints under cfg.out_dir
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
};

/// Trains until cfg.steps total steps. Evaluates at the starting step, every
/// eval_interval steps and at the end; checkpoints every checkpoint_interval
/// steps and at the end.
RunResult run(Trainer& trainer, const RunOptions& opt = {});

struct AblationRow {
  std::string label;
  AblationFlags flags;
  std::uint64_t seed = 0;
  std::string config_hash;
  EvalRecord result;
};

/// Every on/off combination of `axes` (axis i toggled by bit i, rows in
/// ascending mask order), each trained from the same seed and data.
std::vector<AblationRow> ablation_run(const TrainConfig& base, const std::vector<std::string>& axes,
                                      const std::vector<synthetic::SyntheticSample>& data,
                                      const std::function<void(const AblationRow&)>& on_row = {});

void write_ablation_table(std::ostream& out, const std::vector<std::string>& axes,
                          const std::vector<AblationRow>& rows);

}  // namespace aagn::trainer
