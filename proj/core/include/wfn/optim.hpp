#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "wfn/data.hpp"
#include "wfn/loss.hpp"
#include "wfn/network.hpp"

namespace wfn {

struct ScheduleSpec {
  double lr0 = 1e-4;
  std::int64_t total_steps = 1000;
};

/// (lr0 / 2) (1 + cos(pi t / T)) for 0 <= t <= T.
double cosine_lr(std::int64_t t, const ScheduleSpec& spec);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  /// Zero moments shaped like the parameters.
  static AdamState for_parameters(const ParameterSet& params);
};

/// One bias-corrected Adam update. Raises NumericError on non-finite
/// gradients, leaving parameters and state untouched.
void adam_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

double global_norm(const std::vector<Tensor>& grads);
/// Rescales grads so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

struct TrainConfig {
  std::int64_t batch = 1;
  std::int64_t steps = 500;
  std::uint64_t seed = 0;
  /// When false, whole images are used as-is.
  bool augment = true;
  AugmentSpec augment_spec;
  double lr0 = 1e-4;
  LossWeights weights;
  /// Requested MS-SSIM scales; reduced to what the patch size admits.
  int ms_ssim_scales = 5;
  /// Global-norm clipping threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
  std::uint64_t extractor_seed = FeatureExtractor::kDefaultSeed;

  /// Output directory for metrics.log and checkpoints; empty writes nothing.
  std::filesystem::path out_dir;
  std::int64_t log_every = 1;
  /// 0 saves only the final checkpoint.
  std::int64_t checkpoint_every = 0;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l1 = 0.0;
  double msssim_loss = 0.0;
  double perceptual = 0.0;
  double psnr = 0.0;
  double grad_norm = 0.0;
};

/// `step=.. lr=.. loss=.. l1=.. msssim=.. perceptual=.. psnr=.. grad_norm=..`
std::string format_step_record(const StepRecord& r);

struct TrainState {
  AdamState adam;
  ScheduleSpec schedule;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::vector<StepRecord> history;
  std::vector<std::filesystem::path> checkpoints;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains in place. Each step samples a batch (and augmentation) from an
/// mt19937_64 seeded with cfg.seed, evaluates total_loss, back-propagates,
/// clips and applies Adam at cosine_lr(step). The record for a step holds
/// the loss before its update.
TrainState fit(Model& model, const std::vector<ImagePair>& dataset, const TrainConfig& cfg,
               const StepCallback& on_step = {});

}  // namespace wfn
