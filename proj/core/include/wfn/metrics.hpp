#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "wfn/tensor.hpp"

namespace wfn {

/// 10 log10(max^2 / MSE) over all channels; +infinity when MSE is 0.
double psnr(const Tensor& pred, const Tensor& target, double max_val = 1.0);
/// Mean SSIM map of the channel-mean grayscale images. Accepts [3,H,W] or
/// [N,3,H,W] (averaged over the batch).
double ssim(const Tensor& pred, const Tensor& target);
/// Shannon entropy in bits of the 256-level histogram of the channel-mean
/// grayscale image. Values are clamped to [0,1] and rounded to the nearest
/// level.
double entropy(const Tensor& img);
/// Entropy of an explicit histogram (0 log 0 = 0).
double histogram_entropy(const std::vector<std::int64_t>& counts);

struct ImageMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double entropy = 0.0;
};

struct MetricsReport {
  std::vector<ImageMetrics> images;

  void add(ImageMetrics m) { images.push_back(std::move(m)); }
  /// Arithmetic means; the PSNR mean is +infinity if any image is.
  ImageMetrics mean() const;
  /// `id psnr ssim entropy` lines followed by a `MEAN` line.
  std::string format() const;
  void write(const std::filesystem::path& path) const;
};

/// Formats +infinity as "inf", otherwise fixed with 6 decimals.
std::string format_metric(double v);

}  // namespace wfn
