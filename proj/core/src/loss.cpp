#include "wfn/loss.hpp"

#include <cmath>
#include <string>

#include "wfn/params.hpp"

namespace wfn {

void LossWeights::validate() const {
  if (l1 < 0.0 || msssim < 0.0 || perceptual < 0.0) throw ConfigError("loss weights must be non-negative");
  if (l1 + msssim + perceptual <= 0.0) throw ConfigError("at least one loss weight must be positive");
}

Tensor gaussian_window() {
  double g[kSsimWindow];
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  Tensor w(Shape{1, 1, kSsimWindow, kSsimWindow});
  for (int i = 0; i < kSsimWindow; ++i)
    for (int j = 0; j < kSsimWindow; ++j) w[i * kSsimWindow + j] = g[i] * g[j] / (total * total);
  return w;
}

Var l1_loss(Var pred, Var target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  return ops::mean(ops::abs(ops::sub(pred, target)));
}

SsimMaps ssim_maps(Var x, Var y) {
  const Shape& s = x.shape();
  if (s != y.shape()) throw ShapeError("ssim: " + to_string(s) + " vs " + to_string(y.shape()));
  if (s.size() != 4) throw ShapeError("ssim expects [N,C,H,W], got " + to_string(s));
  if (s[2] < kSsimWindow || s[3] < kSsimWindow) {
    throw ShapeError("ssim: image " + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " is smaller than the " +
                     std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  Tape& tape = *x.tape;
  const Shape planes{s[0] * s[1], 1, s[2], s[3]};
  const Var win = tape.constant(gaussian_window());
  const ConvSpec spec{1, 1, kSsimWindow, 1, 1, 0, false};
  auto filt = [&](Var v) { return ops::conv2d(v, win, std::nullopt, spec); };

  const Var xp = ops::reshape(x, planes);
  const Var yp = ops::reshape(y, planes);
  const Var mx = filt(xp), my = filt(yp);
  const Var mx2 = ops::square(mx), my2 = ops::square(my), mxy = ops::mul(mx, my);
  const Var vx = ops::sub(filt(ops::square(xp)), mx2);
  const Var vy = ops::sub(filt(ops::square(yp)), my2);
  const Var cxy = ops::sub(filt(ops::mul(xp, yp)), mxy);

  const Var cs = ops::div(ops::add_scalar(ops::mul_scalar(cxy, 2.0), kSsimC2), ops::add_scalar(ops::add(vx, vy), kSsimC2));
  const Var lum =
      ops::div(ops::add_scalar(ops::mul_scalar(mxy, 2.0), kSsimC1), ops::add_scalar(ops::add(mx2, my2), kSsimC1));
  return {ops::mul(lum, cs), cs};
}

int max_ms_ssim_scales(std::int64_t h, std::int64_t w) {
  int scales = 0;
  while (scales < static_cast<int>(kMsSsimWeights.size()) &&
         std::min(h, w) >= (std::int64_t{1} << scales) * kSsimWindow) {
    ++scales;
  }
  return scales;
}

Var ms_ssim(Var pred, Var target, int scales) {
  if (scales < 1 || scales > static_cast<int>(kMsSsimWeights.size())) {
    throw ConfigError("ms_ssim: scales must be in [1, 5]");
  }
  const Shape& s = pred.shape();
  if (s.size() != 4) throw ShapeError("ms_ssim expects [N,C,H,W], got " + to_string(s));
  const std::int64_t need = (std::int64_t{1} << (scales - 1)) * kSsimWindow;
  if (s[2] < need || s[3] < need) {
    throw ShapeError("ms_ssim: " + std::to_string(scales) + " scales need extents >= " + std::to_string(need) +
                     ", got " + std::to_string(s[2]) + "x" + std::to_string(s[3]));
  }
  double norm = 0.0;
  for (int j = 0; j < scales; ++j) norm += kMsSsimWeights[static_cast<std::size_t>(j)];

  Var x = pred, y = target;
  std::optional<Var> product;
  for (int j = 0; j < scales; ++j) {
    const SsimMaps maps = ssim_maps(x, y);
    const bool last = j + 1 == scales;
    const Var per_plane = ops::mean_hw(last ? maps.ssim : maps.contrast_structure);
    const Var term = ops::pow_scalar(ops::relu(per_plane), kMsSsimWeights[static_cast<std::size_t>(j)] / norm);
    product = product ? ops::mul(*product, term) : term;
    if (!last) {
      x = ops::avg_pool2(x);
      y = ops::avg_pool2(y);
    }
  }
  return ops::mean(*product);
}

FeatureExtractor FeatureExtractor::create(std::uint64_t seed) {
  FeatureExtractor fe;
  Initializer init(seed);
  const std::int64_t widths[4] = {3, 8, 16, 32};
  for (int i = 0; i < 3; ++i) {
    fe.weights_.push_back(init.fan_in_uniform(Shape{widths[i + 1], widths[i], 3, 3}, widths[i] * 9));
    fe.biases_.push_back(init.fan_in_uniform(Shape{widths[i + 1]}, widths[i] * 9));
  }
  return fe;
}

std::vector<Var> FeatureExtractor::features(Var x) const {
  Tape& tape = *x.tape;
  std::vector<Var> out;
  Var h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const Shape& ws = weights_[i].shape();
    const ConvSpec spec{ws[1], ws[0], 3, 2, 1, 1, true};
    h = ops::relu(ops::conv2d(h, tape.constant(weights_[i]), tape.constant(biases_[i]), spec));
    if (i >= 1) out.push_back(h);
  }
  return out;
}

Var perceptual_loss(Var pred, Var target, const FeatureExtractor& extractor) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("perceptual_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  Tape& tape = *pred.tape;
  const std::vector<Var> fp = extractor.features(pred);
  const std::vector<Var> ft = extractor.features(tape.constant(target.value()));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < fp.size(); ++i) terms.push_back(ops::mean(ops::abs(ops::sub(fp[i], ft[i]))));
  return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

LossTerms total_loss(Var pred, Var target, const LossWeights& weights, const FeatureExtractor& extractor,
                     int ms_ssim_scales) {
  weights.validate();
  LossTerms out;
  std::vector<Var> terms;
  std::vector<double> coeffs;
  if (weights.l1 > 0.0) {
    const Var l = l1_loss(pred, target);
    out.l1 = l.value().item();
    terms.push_back(l);
    coeffs.push_back(weights.l1);
  }
  if (weights.msssim > 0.0) {
    const Var l = ops::add_scalar(ops::mul_scalar(ms_ssim(pred, target, ms_ssim_scales), -1.0), 1.0);
    out.msssim_loss = l.value().item();
    terms.push_back(l);
    coeffs.push_back(weights.msssim);
  }
  if (weights.perceptual > 0.0) {
    const Var l = perceptual_loss(pred, target, extractor);
    out.perceptual = l.value().item();
    terms.push_back(l);
    coeffs.push_back(weights.perceptual);
  }
  out.total = ops::weighted_sum(terms, coeffs);
  return out;
}

}  // namespace wfn
