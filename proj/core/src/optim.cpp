#include "wfn/optim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "wfn/metrics.hpp"

namespace wfn {

double cosine_lr(std::int64_t t, const ScheduleSpec& spec) {
  if (spec.total_steps < 1) throw ConfigError("schedule needs total_steps >= 1");
  if (t < 0 || t > spec.total_steps) {
    throw ConfigError("cosine_lr: step " + std::to_string(t) + " outside [0, " + std::to_string(spec.total_steps) + "]");
  }
  if (t == spec.total_steps) return 0.0;
  return spec.lr0 / 2.0 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.total_steps)));
}

AdamState AdamState::for_parameters(const ParameterSet& params) {
  AdamState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).shape());
    s.v.emplace_back(params.value(i).shape());
  }
  return s;
}

void adam_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.value(i).shape()) {
      throw ShapeError("adam_step: gradient shape mismatch for '" + params.name(i) + "'");
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for '" + params.name(i) + "'");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params.value(i).data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += sum_squares(g);
  return std::sqrt(s);
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.data()) v *= scale;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (!(lr0 > 0.0)) throw ConfigError("learning rate must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (augment && !(augment_spec.flip_probability >= 0.0 && augment_spec.flip_probability <= 1.0)) {
    throw ConfigError("flip probability must lie in [0,1]");
  }
  weights.validate();
}

std::string format_step_record(const StepRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "step=%lld lr=%.9g loss=%.9g l1=%.9g msssim=%.9g perceptual=%.9g psnr=%s grad_norm=%.9g",
                static_cast<long long>(r.step), r.lr, r.loss, r.l1, r.msssim_loss, r.perceptual,
                format_metric(r.psnr).c_str(), r.grad_norm);
  return buf;
}

TrainState fit(Model& model, const std::vector<ImagePair>& dataset, const TrainConfig& cfg,
               const StepCallback& on_step) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("fit: dataset is empty");

  const std::int64_t h = cfg.augment ? cfg.augment_spec.patch : dataset.front().hazy.dim(1);
  const std::int64_t w = cfg.augment ? cfg.augment_spec.patch : dataset.front().hazy.dim(2);
  if (!cfg.augment) {
    for (const auto& p : dataset) {
      if (p.hazy.dim(1) != h || p.hazy.dim(2) != w) {
        throw ShapeError("fit without augmentation needs equally sized images; '" + p.id + "' differs");
      }
    }
  }
  model.config().check_extents(h, w);
  const int scales = std::min(cfg.ms_ssim_scales, max_ms_ssim_scales(h, w));
  if (cfg.weights.msssim > 0.0 && scales < 1) {
    throw ConfigError("patch " + std::to_string(h) + "x" + std::to_string(w) + " is too small for MS-SSIM");
  }

  TrainState state;
  state.adam = AdamState::for_parameters(model.parameters());
  state.schedule = {cfg.lr0, std::max<std::int64_t>(cfg.steps, 1)};
  state.seed = cfg.seed;

  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log.open(cfg.out_dir / "metrics.log", std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log in '" + cfg.out_dir.string() + "'");
  }
  auto save = [&](std::int64_t step) {
    const auto path = cfg.out_dir / ("ckpt_" + std::to_string(step) + ".wfn");
    save_checkpoint(model, path);
    state.checkpoints.push_back(path);
  };

  const FeatureExtractor extractor = FeatureExtractor::create(cfg.extractor_seed);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<Tensor> hazy, clean;
    for (std::int64_t b = 0; b < cfg.batch; ++b) {
      const ImagePair& src = dataset[pick(rng)];
      if (cfg.augment) {
        ImagePair a = augment(src, cfg.augment_spec, rng);
        hazy.push_back(std::move(a.hazy));
        clean.push_back(std::move(a.clean));
      } else {
        hazy.push_back(src.hazy);
        clean.push_back(src.clean);
      }
    }

    StepRecord rec;
    rec.step = step;
    rec.lr = cosine_lr(step, state.schedule);
    std::vector<Tensor> grads;
    try {
      Tape tape;
      BoundParameters bound(tape, model.parameters(), true);
      const Var pred = model.forward(bound, tape.constant(to_batch(hazy)));
      const Var target = tape.constant(to_batch(clean));
      const LossTerms loss = total_loss(pred, target, cfg.weights, extractor, std::max(scales, 1));
      rec.loss = loss.total.value().item();
      rec.l1 = loss.l1;
      rec.msssim_loss = loss.msssim_loss;
      rec.perceptual = loss.perceptual;
      rec.psnr = psnr(pred.value(), target.value());
      tape.backward(loss.total);
      grads = bound.gradients();
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    rec.grad_norm = clip_grad_norm(grads, cfg.clip_norm);
    adam_step(model.parameters(), grads, state.adam, rec.lr);
    state.step = step + 1;
    state.history.push_back(rec);

    if (log.is_open() && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) log << format_step_record(rec) << '\n';
    if (on_step) on_step(rec);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 != cfg.steps) {
      save(step + 1);
    }
  }
  if (!cfg.out_dir.empty()) {
    log.flush();
    save(cfg.steps);
  }
  return state;
}

}  // namespace wfn
