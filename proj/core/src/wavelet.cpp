#include "wfn/wavelet.hpp"

#include <cmath>
#include <string>

namespace wfn {
namespace {

// Daubechies scaling filters, synthesis-order (low-pass sums to sqrt 2).
constexpr double kDb4[8] = {
    0.2303778133088965008632912,  0.714846570552915647089922,   0.6308807679298589078817163,
    -0.02798376941685985421141375, -0.1870348117190930840795707, 0.03084138183556076362721936,
    0.03288301166688519973540751,  -0.01059740178506903210488321,
};

// Analysis of a strided length-n signal into n/2 low and n/2 high coefficients.
void analyze(const double* in, std::int64_t in_stride, std::int64_t n, double* lo, double* hi,
             std::int64_t out_stride, const FilterPair& f) {
  const auto taps = static_cast<std::int64_t>(f.lowpass.size());
  for (std::int64_t m = 0; m < n / 2; ++m) {
    double a = 0.0, d = 0.0;
    for (std::int64_t k = 0; k < taps; ++k) {
      const double v = in[((2 * m + k) % n) * in_stride];
      a += f.lowpass[static_cast<std::size_t>(k)] * v;
      d += f.highpass[static_cast<std::size_t>(k)] * v;
    }
    lo[m * out_stride] = a;
    hi[m * out_stride] = d;
  }
}

// Adjoint of analyze; accumulates into out (length 2*half).
void synthesize(const double* lo, const double* hi, std::int64_t in_stride, std::int64_t half, double* out,
                std::int64_t out_stride, const FilterPair& f) {
  const auto taps = static_cast<std::int64_t>(f.lowpass.size());
  const std::int64_t n = 2 * half;
  for (std::int64_t m = 0; m < half; ++m) {
    const double a = lo[m * in_stride], d = hi[m * in_stride];
    for (std::int64_t k = 0; k < taps; ++k) {
      out[((2 * m + k) % n) * out_stride] +=
          f.lowpass[static_cast<std::size_t>(k)] * a + f.highpass[static_cast<std::size_t>(k)] * d;
    }
  }
}

// One plane [h,w] -> four planes [h/2,w/2].
void analyze_plane(const double* x, std::int64_t h, std::int64_t w, const FilterPair& f, double* ll, double* lh,
                   double* hl, double* hh, std::vector<double>& scratch) {
  const std::int64_t w2 = w / 2;
  scratch.assign(static_cast<std::size_t>(h * w), 0.0);
  double* lo = scratch.data();
  double* hi = scratch.data() + h * w2;
  for (std::int64_t r = 0; r < h; ++r) analyze(x + r * w, 1, w, lo + r * w2, hi + r * w2, 1, f);
  for (std::int64_t c = 0; c < w2; ++c) {
    analyze(lo + c, w2, h, ll + c, lh + c, w2, f);
    analyze(hi + c, w2, h, hl + c, hh + c, w2, f);
  }
}

// Four planes [h2,w2] -> one plane [2*h2, 2*w2] (overwrites x).
void synthesize_plane(const double* ll, const double* lh, const double* hl, const double* hh, std::int64_t h2,
                      std::int64_t w2, const FilterPair& f, double* x, std::vector<double>& scratch) {
  const std::int64_t h = 2 * h2, w = 2 * w2;
  scratch.assign(static_cast<std::size_t>(h * w), 0.0);
  double* lo = scratch.data();
  double* hi = scratch.data() + h * w2;
  for (std::int64_t c = 0; c < w2; ++c) {
    synthesize(ll + c, lh + c, w2, h2, lo + c, w2, f);
    synthesize(hl + c, hh + c, w2, h2, hi + c, w2, f);
  }
  std::fill(x, x + h * w, 0.0);
  for (std::int64_t r = 0; r < h; ++r) synthesize(lo + r * w2, hi + r * w2, 1, w2, x + r * w, 1, f);
}

void require_even(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + to_string(s));
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError(std::string(op) + ": spatial extents must be even, got " + to_string(s));
  }
}

// Stacked layout helpers: band b of channel c lives in channel b*C + c.
Tensor analyze_stacked(const Tensor& x, const FilterPair& f) {
  require_even(x.shape(), "dwt2d");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t plane = (h / 2) * (w / 2);
  Tensor y(Shape{n, 4 * c, h / 2, w / 2});
  std::vector<double> scratch;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* base = y.ptr() + i * 4 * c * plane;
      analyze_plane(x.ptr() + (i * c + ch) * h * w, h, w, f, base + ch * plane, base + (c + ch) * plane,
                    base + (2 * c + ch) * plane, base + (3 * c + ch) * plane, scratch);
    }
  }
  return y;
}

Tensor synthesize_stacked(const Tensor& s, const FilterPair& f) {
  if (s.rank() != 4 || s.dim(1) % 4 != 0) {
    throw ShapeError("idwt2d: expected [N,4C,H,W] subband stack, got " + to_string(s.shape()));
  }
  const std::int64_t n = s.dim(0), c = s.dim(1) / 4, h2 = s.dim(2), w2 = s.dim(3);
  const std::int64_t plane = h2 * w2;
  Tensor x(Shape{n, c, 2 * h2, 2 * w2});
  std::vector<double> scratch;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* base = s.ptr() + i * 4 * c * plane;
      synthesize_plane(base + ch * plane, base + (c + ch) * plane, base + (2 * c + ch) * plane,
                       base + (3 * c + ch) * plane, h2, w2, f, x.ptr() + (i * c + ch) * 4 * plane, scratch);
    }
  }
  return x;
}

Tensor stack(const SubbandSet& b) {
  const Shape& s = b.ll.shape();
  if (s.size() != 4 || b.lh.shape() != s || b.hl.shape() != s || b.hh.shape() != s) {
    throw ShapeError("idwt2d: subbands must share one [N,C,H,W] shape");
  }
  const std::int64_t n = s[0], c = s[1], plane = s[2] * s[3];
  Tensor out(Shape{n, 4 * c, s[2], s[3]});
  const Tensor* bands[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
  for (std::int64_t i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k)
      std::copy_n(bands[k]->ptr() + i * c * plane, c * plane, out.ptr() + (i * 4 + k) * c * plane);
  return out;
}

SubbandSet unstack(const Tensor& t) {
  const std::int64_t n = t.dim(0), c = t.dim(1) / 4, plane = t.dim(2) * t.dim(3);
  SubbandSet b;
  Tensor* bands[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
  for (int k = 0; k < 4; ++k) {
    *bands[k] = Tensor(Shape{n, c, t.dim(2), t.dim(3)});
    for (std::int64_t i = 0; i < n; ++i)
      std::copy_n(t.ptr() + (i * 4 + k) * c * plane, c * plane, bands[k]->ptr() + i * c * plane);
  }
  return b;
}

}  // namespace

WaveletFamily parse_wavelet_family(std::string_view name) {
  if (name == "haar" || name == "db1") return WaveletFamily::Haar;
  if (name == "db2") return WaveletFamily::Db2;
  if (name == "db4") return WaveletFamily::Db4;
  throw ConfigError("unknown wavelet family '" + std::string(name) + "' (expected haar, db2 or db4)");
}

std::string_view wavelet_name(WaveletFamily family) {
  switch (family) {
    case WaveletFamily::Haar: return "haar";
    case WaveletFamily::Db2: return "db2";
    case WaveletFamily::Db4: return "db4";
  }
  return "unknown";
}

FilterPair make_filters(WaveletFamily family) {
  FilterPair f;
  switch (family) {
    case WaveletFamily::Haar: {
      const double r = 1.0 / std::sqrt(2.0);
      f.lowpass = {r, r};
      break;
    }
    case WaveletFamily::Db2: {
      const double s3 = std::sqrt(3.0);
      const double d = 4.0 * std::sqrt(2.0);
      f.lowpass = {(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d};
      break;
    }
    case WaveletFamily::Db4:
      f.lowpass.assign(std::begin(kDb4), std::end(kDb4));
      break;
  }
  const std::size_t taps = f.lowpass.size();
  f.highpass.resize(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    f.highpass[k] = (k % 2 == 0 ? 1.0 : -1.0) * f.lowpass[taps - 1 - k];
  }
  return f;
}

SubbandSet dwt2d(const Tensor& x, WaveletFamily family) {
  return unstack(analyze_stacked(x, make_filters(family)));
}

Tensor idwt2d(const SubbandSet& bands, WaveletFamily family) {
  return synthesize_stacked(stack(bands), make_filters(family));
}

std::vector<SubbandSet> wavedec2(const Tensor& x, const WaveletSpec& spec) {
  if (spec.levels < 1) throw ConfigError("wavelet levels must be >= 1");
  std::vector<SubbandSet> out;
  const Tensor* current = &x;
  for (int l = 0; l < spec.levels; ++l) {
    out.push_back(dwt2d(*current, spec.family));
    current = &out.back().ll;
  }
  return out;
}

Tensor waverec2(const std::vector<SubbandSet>& levels, WaveletFamily family) {
  if (levels.empty()) throw ShapeError("waverec2: no levels");
  Tensor approx = levels.back().ll;
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    approx = idwt2d(SubbandSet{std::move(approx), it->lh, it->hl, it->hh}, family);
  }
  return approx;
}

namespace ops {

Var dwt2d(Var x, WaveletFamily family) {
  FilterPair f = make_filters(family);
  Tensor y = analyze_stacked(x.value(), f);
  return x.tape->record("dwt2d", std::move(y), {x}, [x, f = std::move(f)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    // Orthogonal transform: the adjoint is the synthesis bank.
    const Tensor back = synthesize_stacked(t.grad(self), f);
    auto gx = t.grad_buffer(x.id);
    for (std::int64_t i = 0; i < back.numel(); ++i) gx[i] += back[i];
  });
}

Var idwt2d(Var bands, WaveletFamily family) {
  FilterPair f = make_filters(family);
  Tensor y = synthesize_stacked(bands.value(), f);
  return bands.tape->record("idwt2d", std::move(y), {bands}, [bands, f = std::move(f)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(bands)) return;
    const Tensor back = analyze_stacked(t.grad(self), f);
    auto gb = t.grad_buffer(bands.id);
    for (std::int64_t i = 0; i < back.numel(); ++i) gb[i] += back[i];
  });
}

}  // namespace ops
}  // namespace wfn
