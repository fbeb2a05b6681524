#include "wfn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gemm.hpp"

namespace wfn {

std::int64_t ConvSpec::output_extent(std::int64_t n) const {
  const std::int64_t out = (n + 2 * padding - dilation * (kernel - 1) - 1);
  if (out < 0) {
    throw ShapeError("convolution output extent is non-positive (input " + std::to_string(n) + ", receptive field " +
                     std::to_string(receptive_field()) + ", padding " + std::to_string(padding) + ")");
  }
  return out / stride + 1;
}

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) throw ShapeError("conv channel counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("conv kernel extent must be odd and positive");
  if (stride < 1 || dilation < 1 || padding < 0) throw ShapeError("invalid conv stride/dilation/padding");
}

namespace ops {
namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
  return axis;
}

// Splits a shape into (outer, axis extent, inner) around one axis.
struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i < axis) r.outer *= s[i];
    else if (i == axis) r.n = s[i];
    else r.inner *= s[i];
  }
  return r;
}

template <class F, class DF>
Var unary(const char* name, Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return a.tape->record(name, std::move(y), {a}, [a, df](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(self);
    auto ga = t.grad_buffer(a.id);
    for (std::int64_t i = 0; i < x.numel(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

// Rearranges one image [C,H,W] into columns [C*k*k, Ho*Wo].
void im2col(const double* img, std::int64_t c, std::int64_t h, std::int64_t w, const ConvSpec& s, std::int64_t ho,
            std::int64_t wo, double* col) {
  const std::int64_t k = s.kernel;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        double* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * s.stride - s.padding + ki * s.dilation;
          double* out = row + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = img + (ci * h + ih) * w;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * s.stride - s.padding + kj * s.dilation;
            out[ow] = (iw >= 0 && iw < w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into an image.
void col2im(const double* col, std::int64_t c, std::int64_t h, std::int64_t w, const ConvSpec& s, std::int64_t ho,
            std::int64_t wo, double* img) {
  const std::int64_t k = s.kernel;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * s.stride - s.padding + ki * s.dilation;
          if (ih < 0 || ih >= h) continue;
          double* dst = img + (ci * h + ih) * w;
          const double* in = row + oh * wo;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * s.stride - s.padding + kj * s.dilation;
            if (iw >= 0 && iw < w) dst[iw] += in[ow];
          }
        }
      }
    }
  }
}

void transpose(const double* a, std::int64_t rows, std::int64_t cols, double* out) {
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
}

void check_conv_inputs(const char* op, Var x, Var w, std::optional<Var> b, const ConvSpec& spec,
                       std::int64_t x_channels, const Shape& w_shape) {
  spec.validate();
  if (x.value().rank() != 4) throw ShapeError(std::string(op) + ": input must be rank 4, got " + to_string(x.shape()));
  if (x.dim(1) != x_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.dim(1)) + " channels, the conv expects " +
                     std::to_string(x_channels));
  }
  if (w.shape() != w_shape) {
    throw ShapeError(std::string(op) + ": weight shape " + to_string(w.shape()) + " expected " + to_string(w_shape));
  }
  if (spec.bias != b.has_value()) throw ShapeError(std::string(op) + ": bias presence disagrees with spec");
  if (b && b->shape() != Shape{spec.out_channels}) throw ShapeError(std::string(op) + ": bias shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return a.tape->record("add", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (Var p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      auto gp = t.grad_buffer(p.id);
      for (std::int64_t i = 0; i < g.numel(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  return a.tape->record("sub", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      auto ga = t.grad_buffer(a.id);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad_buffer(b.id);
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      auto ga = t.grad_buffer(a.id);
      const Tensor& bv = t.value(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad_buffer(b.id);
      const Tensor& av = t.value(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] /= bv[i];
  return a.tape->record("div", std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      auto ga = t.grad_buffer(a.id);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad_buffer(b.id);
      const Tensor& y = t.value(self);
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i] * y[i] / bv[i];
    }
  });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double s) {
  return unary("mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x); });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var pow_scalar(Var a, double p) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw NumericError("pow_scalar: negative base");
  }
  return unary(
      "pow_scalar", a, [p](double x) { return x > 0.0 ? std::pow(x, p) : 0.0; },
      [p](double x, double) { return x > 0.0 ? p * std::pow(x, p - 1.0) : 0.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a}, [a](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(a.id)) v += g;
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().numel());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("mean", Tensor::scalar(s / n), {a}, [a, n](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const double g = t.grad(self)[0] / n;
    for (double& v : t.grad_buffer(a.id)) v += g;
  });
}

Var mean_hw(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 4) throw ShapeError("mean_hw expects rank 4");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t hw = x.dim(2) * x.dim(3);
  Tensor y(Shape{x.dim(0), x.dim(1)});
  for (std::int64_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) s += x[p * hw + i];
    y[p] = s / static_cast<double>(hw);
  }
  return a.tape->record("mean_hw", std::move(y), {a}, [a, planes, hw](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    auto ga = t.grad_buffer(a.id);
    for (std::int64_t p = 0; p < planes; ++p) {
      const double gv = g[p] / static_cast<double>(hw);
      for (std::int64_t i = 0; i < hw; ++i) ga[p * hw + i] += gv;
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.empty() || terms.size() != weights.size()) throw ShapeError("weighted_sum: terms/weights mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    s += weights[i] * terms[i].value()[0];
  }
  return terms[0].tape->record("weighted_sum", Tensor::scalar(s), terms, [terms, weights](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (t.requires_grad(terms[i])) t.grad_buffer(terms[i].id)[0] += weights[i] * g;
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(y), {a}, [a](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    auto ga = t.grad_buffer(a.id);
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& s0 = parts[0].shape();
  axis = normalize_axis(axis, static_cast<int>(s0.size()));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (Var p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != s0[i]) throw ShapeError("concat: extent mismatch off the concat axis");
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit so = split_axis(out_shape, axis);
  Tensor y(out_shape);
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    const std::int64_t n = p.shape()[axis];
    const Tensor& v = p.value();
    for (std::int64_t o = 0; o < so.outer; ++o) {
      std::copy_n(v.ptr() + o * n * so.inner, n * so.inner, y.ptr() + (o * so.n + off) * so.inner);
    }
    off += n;
  }
  return parts[0].tape->record("concat", std::move(y), parts, [parts, offsets, so, axis](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!t.requires_grad(parts[k])) continue;
      const std::int64_t n = t.value(parts[k]).shape()[axis];
      auto gp = t.grad_buffer(parts[k].id);
      for (std::int64_t o = 0; o < so.outer; ++o) {
        const double* src = g.ptr() + (o * so.n + offsets[k]) * so.inner;
        double* dst = gp.data() + o * n * so.inner;
        for (std::int64_t i = 0; i < n * so.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(Var a, int axis, std::int64_t start, std::int64_t length) {
  const Shape& s = a.shape();
  axis = normalize_axis(axis, static_cast<int>(s.size()));
  if (start < 0 || length <= 0 || start + length > s[axis]) throw ShapeError("slice out of range");
  const AxisSplit si = split_axis(s, axis);
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const Tensor& x = a.value();
  for (std::int64_t o = 0; o < si.outer; ++o) {
    std::copy_n(x.ptr() + (o * si.n + start) * si.inner, length * si.inner, y.ptr() + o * length * si.inner);
  }
  return a.tape->record("slice", std::move(y), {a}, [a, si, start, length](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    auto ga = t.grad_buffer(a.id);
    for (std::int64_t o = 0; o < si.outer; ++o) {
      const double* src = g.ptr() + o * length * si.inner;
      double* dst = ga.data() + (o * si.n + start) * si.inner;
      for (std::int64_t i = 0; i < length * si.inner; ++i) dst[i] += src[i];
    }
  });
}

Var roll_hw(Var a, std::int64_t shift_h, std::int64_t shift_w) {
  const Tensor& x = a.value();
  if (x.rank() != 4) throw ShapeError("roll_hw expects rank 4");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  // index map: out[p, (i+sh)%h, (j+sw)%w] = x[p, i, j]
  std::vector<std::int64_t> dest(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const std::int64_t oi = ((i + shift_h) % h + h) % h;
      const std::int64_t oj = ((j + shift_w) % w + w) % w;
      dest[static_cast<std::size_t>(i * w + j)] = oi * w + oj;
    }
  }
  Tensor y(x.shape());
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t k = 0; k < h * w; ++k) y[p * h * w + dest[static_cast<std::size_t>(k)]] = x[p * h * w + k];
  return a.tape->record("roll_hw", std::move(y), {a}, [a, dest, planes, h, w](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    auto ga = t.grad_buffer(a.id);
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t k = 0; k < h * w; ++k) ga[p * h * w + k] += g[p * h * w + dest[static_cast<std::size_t>(k)]];
  });
}

Var gather(Var table, std::vector<std::int64_t> index, Shape shape) {
  const Tensor& tv = table.value();
  if (shape_numel(shape) != static_cast<std::int64_t>(index.size())) throw ShapeError("gather: index/shape mismatch");
  Tensor y(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= tv.numel()) throw ShapeError("gather: index out of range");
    y[static_cast<std::int64_t>(i)] = tv[index[i]];
  }
  return table.tape->record("gather", std::move(y), {table}, [table, index = std::move(index)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(table)) return;
    const Tensor& g = t.grad(self);
    auto gt = t.grad_buffer(table.id);
    for (std::size_t i = 0; i < index.size(); ++i) gt[index[i]] += g[static_cast<std::int64_t>(i)];
  });
}

Var conv2d(Var x, Var w, std::optional<Var> b, const ConvSpec& spec) {
  const std::int64_t k = spec.kernel;
  check_conv_inputs("conv2d", x, w, b, spec, spec.in_channels, Shape{spec.out_channels, spec.in_channels, k, k});
  const std::int64_t n = x.dim(0), cin = spec.in_channels, h = x.dim(2), wd = x.dim(3);
  const std::int64_t ho = spec.output_extent(h), wo = spec.output_extent(wd);
  const std::int64_t cout = spec.out_channels, kk = cin * k * k, p = ho * wo;

  Tensor y(Shape{n, cout, ho, wo});
  std::vector<double> col(static_cast<std::size_t>(kk * p));
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(xv.ptr() + i * cin * h * wd, cin, h, wd, spec, ho, wo, col.data());
    double* out = y.ptr() + i * cout * p;
    if (b) {
      for (std::int64_t co = 0; co < cout; ++co) std::fill_n(out + co * p, p, b->value()[co]);
    }
    detail::gemm_nn_acc(wv.ptr(), col.data(), out, cout, kk, p);
  }

  std::vector<Var> parents{x, w};
  if (b) parents.push_back(*b);
  return x.tape->record("conv2d", std::move(y), parents, [x, w, b, spec, n, cin, h, wd, ho, wo, cout, kk, p](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    std::vector<double> col(static_cast<std::size_t>(kk * p));
    std::vector<double> col_t(need_w ? static_cast<std::size_t>(kk * p) : 0);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* gi = g.ptr() + i * cout * p;
      if (need_w) {
        im2col(xv.ptr() + i * cin * h * wd, cin, h, wd, spec, ho, wo, col.data());
        transpose(col.data(), kk, p, col_t.data());
        // dW[co, :] += sum_p g[co, p] * colT[p, :]
        detail::gemm_nn_acc(gi, col_t.data(), t.grad_buffer(w.id).data(), cout, p, kk);
      }
      if (need_x) {
        std::fill(col.begin(), col.end(), 0.0);
        detail::gemm_tn_acc(wv.ptr(), gi, col.data(), cout, kk, p);
        col2im(col.data(), cin, h, wd, spec, ho, wo, t.grad_buffer(x.id).data() + i * cin * h * wd);
      }
    }
    if (b && t.requires_grad(*b)) {
      auto gb = t.grad_buffer(b->id);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t co = 0; co < cout; ++co) {
          const double* gi = g.ptr() + (i * cout + co) * p;
          double s = 0.0;
          for (std::int64_t q = 0; q < p; ++q) s += gi[q];
          gb[co] += s;
        }
    }
  });
}

Var conv_transpose2d(Var x, Var w, std::optional<Var> b, const ConvSpec& spec, std::int64_t output_padding) {
  const std::int64_t k = spec.kernel;
  check_conv_inputs("conv_transpose2d", x, w, b, spec, spec.in_channels, Shape{spec.in_channels, spec.out_channels, k, k});
  if (output_padding < 0 || output_padding >= std::max(spec.stride, spec.dilation)) {
    throw ShapeError("conv_transpose2d: output_padding must be smaller than stride or dilation");
  }
  const std::int64_t n = x.dim(0), cin = spec.in_channels, h = x.dim(2), wd = x.dim(3);
  const std::int64_t cout = spec.out_channels;
  const std::int64_t ho = (h - 1) * spec.stride - 2 * spec.padding + spec.dilation * (k - 1) + output_padding + 1;
  const std::int64_t wo = (wd - 1) * spec.stride - 2 * spec.padding + spec.dilation * (k - 1) + output_padding + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv_transpose2d: non-positive output extent");
  // The adjoint convolution maps [cout, ho, wo] -> [cin, h, wd].
  ConvSpec fwd{cout, cin, k, spec.stride, spec.dilation, spec.padding, false};
  if (fwd.output_extent(ho) != h || fwd.output_extent(wo) != wd) {
    throw ShapeError("conv_transpose2d: geometry is not the adjoint of a valid convolution");
  }
  const std::int64_t kk = cout * k * k, p = h * wd;

  Tensor y(Shape{n, cout, ho, wo});
  std::vector<double> col(static_cast<std::size_t>(kk * p));
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  for (std::int64_t i = 0; i < n; ++i) {
    std::fill(col.begin(), col.end(), 0.0);
    // col[kk, p] = sum_ci W[ci, kk] x[ci, p]
    detail::gemm_tn_acc(wv.ptr(), xv.ptr() + i * cin * p, col.data(), cin, kk, p);
    double* out = y.ptr() + i * cout * ho * wo;
    col2im(col.data(), cout, ho, wo, fwd, h, wd, out);
    if (b) {
      for (std::int64_t co = 0; co < cout; ++co)
        for (std::int64_t q = 0; q < ho * wo; ++q) out[co * ho * wo + q] += b->value()[co];
    }
  }

  std::vector<Var> parents{x, w};
  if (b) parents.push_back(*b);
  return x.tape->record("conv_transpose2d", std::move(y), parents,
                        [x, w, b, fwd, n, cin, cout, h, wd, ho, wo, kk, p](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    std::vector<double> col(static_cast<std::size_t>(kk * p));
    std::vector<double> col_t(need_w ? static_cast<std::size_t>(kk * p) : 0);
    for (std::int64_t i = 0; i < n; ++i) {
      im2col(g.ptr() + i * cout * ho * wo, cout, ho, wo, fwd, h, wd, col.data());
      if (need_x) detail::gemm_nn_acc(wv.ptr(), col.data(), t.grad_buffer(x.id).data() + i * cin * p, cin, kk, p);
      if (need_w) {
        transpose(col.data(), kk, p, col_t.data());
        detail::gemm_nn_acc(xv.ptr() + i * cin * p, col_t.data(), t.grad_buffer(w.id).data(), cin, p, kk);
      }
    }
    if (b && t.requires_grad(*b)) {
      auto gb = t.grad_buffer(b->id);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t co = 0; co < cout; ++co) {
          const double* gi = g.ptr() + (i * cout + co) * ho * wo;
          double s = 0.0;
          for (std::int64_t q = 0; q < ho * wo; ++q) s += gi[q];
          gb[co] += s;
        }
    }
  });
}

Var avg_pool2(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("avg_pool2 expects rank 4");
  const std::int64_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t ho = h / 2, wo = w / 2;
  if (ho < 1 || wo < 1) throw ShapeError("avg_pool2: input too small");
  Tensor y(Shape{xv.dim(0), xv.dim(1), ho, wo});
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = xv.ptr() + p * h * w;
    double* dst = y.ptr() + p * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i)
      for (std::int64_t j = 0; j < wo; ++j) {
        const double* s = src + 2 * i * w + 2 * j;
        dst[i * wo + j] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  }
  return x.tape->record("avg_pool2", std::move(y), {x}, [x, planes, h, w, ho, wo](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.grad(self);
    auto gx = t.grad_buffer(x.id);
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) {
          const double v = 0.25 * g[(p * ho + i) * wo + j];
          double* d = gx.data() + p * h * w + 2 * i * w + 2 * j;
          d[0] += v;
          d[1] += v;
          d[w] += v;
          d[w + 1] += v;
        }
  });
}

Var softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  axis = normalize_axis(axis, xv.rank());
  const AxisSplit s = split_axis(xv.shape(), axis);
  Tensor y(xv.shape());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const std::int64_t base = o * s.n * s.inner + in;
      double mx = xv[base];
      for (std::int64_t i = 1; i < s.n; ++i) mx = std::max(mx, xv[base + i * s.inner]);
      double z = 0.0;
      for (std::int64_t i = 0; i < s.n; ++i) {
        const double e = std::exp(xv[base + i * s.inner] - mx);
        y[base + i * s.inner] = e;
        z += e;
      }
      for (std::int64_t i = 0; i < s.n; ++i) y[base + i * s.inner] /= z;
    }
  }
  return x.tape->record("softmax", std::move(y), {x}, [x, s](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    auto gx = t.grad_buffer(x.id);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const std::int64_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::int64_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::int64_t i = 0; i < s.n; ++i) {
          const std::int64_t j = base + i * s.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, int axis, double eps) {
  const Tensor& xv = x.value();
  axis = normalize_axis(axis, xv.rank());
  const AxisSplit s = split_axis(xv.shape(), axis);
  if (gamma.shape() != Shape{s.n} || beta.shape() != Shape{s.n}) {
    throw ShapeError("layer_norm: gamma/beta must have extent " + std::to_string(s.n));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  Tensor rstd(Shape{s.outer * s.inner});
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const std::int64_t base = o * s.n * s.inner + in;
      double m = 0.0;
      for (std::int64_t i = 0; i < s.n; ++i) m += xv[base + i * s.inner];
      m /= static_cast<double>(s.n);
      double var = 0.0;
      for (std::int64_t i = 0; i < s.n; ++i) {
        const double d = xv[base + i * s.inner] - m;
        var += d * d;
      }
      var /= static_cast<double>(s.n);
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[o * s.inner + in] = r;
      for (std::int64_t i = 0; i < s.n; ++i) {
        const std::int64_t j = base + i * s.inner;
        xhat[j] = (xv[j] - m) * r;
        y[j] = gv[i] * xhat[j] + bv[i];
      }
    }
  }
  return x.tape->record("layer_norm", std::move(y), {x, gamma, beta},
                        [x, gamma, beta, s, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& gv = t.value(gamma);
    const bool need_x = t.requires_grad(x);
    std::span<double> gx = need_x ? t.grad_buffer(x.id) : std::span<double>{};
    std::span<double> gg = t.requires_grad(gamma) ? t.grad_buffer(gamma.id) : std::span<double>{};
    std::span<double> gb = t.requires_grad(beta) ? t.grad_buffer(beta.id) : std::span<double>{};
    const double inv_n = 1.0 / static_cast<double>(s.n);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const std::int64_t base = o * s.n * s.inner + in;
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::int64_t i = 0; i < s.n; ++i) {
          const std::int64_t j = base + i * s.inner;
          const double d = g[j] * gv[i];
          mean_d += d;
          mean_dx += d * xhat[j];
          if (!gg.empty()) gg[i] += g[j] * xhat[j];
          if (!gb.empty()) gb[i] += g[j];
        }
        if (!need_x) continue;
        mean_d *= inv_n;
        mean_dx *= inv_n;
        const double r = rstd[o * s.inner + in];
        for (std::int64_t i = 0; i < s.n; ++i) {
          const std::int64_t j = base + i * s.inner;
          gx[j] += r * (g[j] * gv[i] - mean_d - xhat[j] * mean_dx);
        }
      }
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2) throw ShapeError("linear: weight must be rank 2");
  const std::int64_t out = wv.dim(0), in = wv.dim(1);
  if (xv.dim(-1) != in) {
    throw ShapeError("linear: input feature extent " + std::to_string(xv.dim(-1)) + " does not match weight " +
                     to_string(wv.shape()));
  }
  if (b && b->shape() != Shape{out}) throw ShapeError("linear: bias shape mismatch");
  const std::int64_t m = xv.numel() / in;
  Shape ys = xv.shape();
  ys.back() = out;
  Tensor y(ys);
  if (b) {
    for (std::int64_t i = 0; i < m; ++i) std::copy_n(b->value().ptr(), out, y.ptr() + i * out);
  }
  std::vector<double> wt(static_cast<std::size_t>(in * out));
  transpose(wv.ptr(), out, in, wt.data());
  detail::gemm_nn_acc(xv.ptr(), wt.data(), y.ptr(), m, in, out);

  std::vector<Var> parents{x, w};
  if (b) parents.push_back(*b);
  return x.tape->record("linear", std::move(y), parents, [x, w, b, m, in, out](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(x)) detail::gemm_nn_acc(g.ptr(), t.value(w).ptr(), t.grad_buffer(x.id).data(), m, out, in);
    if (t.requires_grad(w)) detail::gemm_tn_acc(g.ptr(), t.value(x).ptr(), t.grad_buffer(w.id).data(), m, out, in);
    if (b && t.requires_grad(*b)) {
      auto gb = t.grad_buffer(b->id);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t o = 0; o < out; ++o) gb[o] += g[i * out + o];
    }
  });
}

}  // namespace ops
}  // namespace wfn
