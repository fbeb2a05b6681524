#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wfn/autodiff.hpp"
#include "wfn/ops.hpp"

namespace wfn {

struct LossWeights {
  double l1 = 1.0;
  double msssim = 0.4;
  double perceptual = 0.01;

  /// Weights must be non-negative with at least one positive.
  void validate() const;
};

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
/// Five-scale MS-SSIM exponents before normalisation.
inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Normalised 11x11 Gaussian window, [1,1,11,11].
Tensor gaussian_window();

/// Mean absolute difference.
Var l1_loss(Var pred, Var target);

/// Local SSIM statistics of [N,C,H,W] inputs over valid 11x11 windows.
/// Both maps are [N*C,1,H-10,W-10].
struct SsimMaps {
  Var ssim;
  Var contrast_structure;
};
SsimMaps ssim_maps(Var x, Var y);

/// Largest scale count (at most 5) the extents admit.
int max_ms_ssim_scales(std::int64_t h, std::int64_t w);
/// Multi-scale SSIM of [N,C,H,W] images in [0,1]. With fewer than five
/// scales the leading standard weights are used, renormalised to sum to 1.
Var ms_ssim(Var pred, Var target, int scales = 5);

/// Frozen feature stack for the perceptual term: three stride-2 3x3 convs
/// (3 -> 8 -> 16 -> 32) with ReLU. Features are taken after the second and
/// third layers.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eedf00dULL;
  static FeatureExtractor create(std::uint64_t seed = kDefaultSeed);

  std::vector<Var> features(Var x) const;
  const std::vector<Tensor>& weights() const { return weights_; }

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Sum over both feature depths of the mean absolute feature difference.
/// Target features are treated as constants.
Var perceptual_loss(Var pred, Var target, const FeatureExtractor& extractor);

struct LossTerms {
  Var total;
  double l1 = 0.0;
  double msssim_loss = 0.0;
  double perceptual = 0.0;
};

/// w_l1 * L1 + w_msssim * (1 - MS-SSIM) + w_perc * Lperc. Terms with zero
/// weight are skipped.
LossTerms total_loss(Var pred, Var target, const LossWeights& weights, const FeatureExtractor& extractor,
                     int ms_ssim_scales = 5);

}  // namespace wfn
