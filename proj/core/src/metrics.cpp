#include "wfn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "wfn/loss.hpp"

namespace wfn {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(where) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

/// Channel-mean grayscale as [N,1,H,W].
Tensor grayscale(const Tensor& img) {
  Tensor x = img.rank() == 3 ? img.reshaped(Shape{1, img.dim(0), img.dim(1), img.dim(2)}) : img;
  if (x.rank() != 4) throw ShapeError("expected [C,H,W] or [N,C,H,W], got " + to_string(img.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor g(Shape{n, 1, x.dim(2), x.dim(3)});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) s += x[(b * c + ch) * hw + i];
      g[b * hw + i] = s / static_cast<double>(c);
    }
  return g;
}

}  // namespace

double psnr(const Tensor& pred, const Tensor& target, double max_val) {
  require_same(pred, target, "psnr");
  double se = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "ssim");
  Tape tape;
  const SsimMaps maps = ssim_maps(tape.constant(grayscale(pred)), tape.constant(grayscale(target)));
  double s = 0.0;
  for (double v : maps.ssim.value().data()) s += v;
  return s / static_cast<double>(maps.ssim.value().numel());
}

double histogram_entropy(const std::vector<std::int64_t>& counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double e = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    e -= p * std::log2(p);
  }
  return e;
}

double entropy(const Tensor& img) {
  const Tensor g = grayscale(img);
  std::vector<std::int64_t> hist(256, 0);
  for (double v : g.data()) {
    const int level = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
    ++hist[static_cast<std::size_t>(level)];
  }
  return histogram_entropy(hist);
}

ImageMetrics MetricsReport::mean() const {
  ImageMetrics m{"MEAN", 0.0, 0.0, 0.0};
  if (images.empty()) return m;
  for (const auto& r : images) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.entropy += r.entropy;
  }
  const auto n = static_cast<double>(images.size());
  m.psnr /= n;
  m.ssim /= n;
  m.entropy /= n;
  return m;
}

std::string format_metric(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string MetricsReport::format() const {
  std::string out;
  auto line = [&](const ImageMetrics& m) {
    out += m.id + " " + format_metric(m.psnr) + " " + format_metric(m.ssim) + " " + format_metric(m.entropy) + "\n";
  };
  for (const auto& m : images) line(m);
  line(mean());
  return out;
}

void MetricsReport::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open report '" + path.string() + "' for writing");
  f << format();
  if (!f) throw IoError("failed writing report '" + path.string() + "'");
}

}  // namespace wfn
