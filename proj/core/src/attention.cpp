#include "wfn/attention.hpp"

#include <algorithm>
#include <cmath>

#include "wfn/ops.hpp"

namespace wfn {

void AttentionConfig::validate() const {
  if (heads < 1 || head_dim < 1 || window < 1) throw ConfigError("attention heads, head_dim and window must be positive");
  if (shifted && window < 2) throw ConfigError("shifted windows need window >= 2");
}

namespace {

// Index of token (n, c, y, x) inside the partitioned layout.
struct WindowGeometry {
  std::int64_t n, c, h, w, win, nh, nw;
  std::int64_t token_offset(std::int64_t b, std::int64_t y, std::int64_t x) const {
    const std::int64_t widx = (b * nh + y / win) * nw + x / win;
    return (widx * win * win + (y % win) * win + (x % win)) * c;
  }
};

WindowGeometry geometry(const Shape& s, std::int64_t window) {
  if (s.size() != 4) throw ShapeError("window_partition expects [N,C,H,W], got " + to_string(s));
  if (window < 1 || s[2] % window != 0 || s[3] % window != 0) {
    throw ShapeError("spatial extents " + to_string(s) + " are not divisible by window " + std::to_string(window));
  }
  return WindowGeometry{s[0], s[1], s[2], s[3], window, s[2] / window, s[3] / window};
}

void partition_kernel(const WindowGeometry& g, const double* img, double* tok) {
  for (std::int64_t b = 0; b < g.n; ++b)
    for (std::int64_t ch = 0; ch < g.c; ++ch)
      for (std::int64_t y = 0; y < g.h; ++y)
        for (std::int64_t x = 0; x < g.w; ++x)
          tok[g.token_offset(b, y, x) + ch] = img[((b * g.c + ch) * g.h + y) * g.w + x];
}

void merge_kernel(const WindowGeometry& g, const double* tok, double* img) {
  for (std::int64_t b = 0; b < g.n; ++b)
    for (std::int64_t ch = 0; ch < g.c; ++ch)
      for (std::int64_t y = 0; y < g.h; ++y)
        for (std::int64_t x = 0; x < g.w; ++x)
          img[((b * g.c + ch) * g.h + y) * g.w + x] = tok[g.token_offset(b, y, x) + ch];
}

struct AttnDims {
  std::int64_t batch, tq, tk, c, heads, hd;
};

// Forward pass; fills probabilities [B,heads,Tq,Tk] and output [B,Tq,C].
void attention_forward(const AttnDims& d, const double* q, const double* k, const double* v, const double* bias,
                       const Tensor* mask, double* probs, double* out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.hd));
  const std::int64_t masks = mask ? mask->dim(0) : 1;
  for (std::int64_t b = 0; b < d.batch; ++b) {
    const double* qb = q + b * d.tq * d.c;
    const double* kb = k + b * d.tk * d.c;
    const double* vb = v + b * d.tk * d.c;
    double* ob = out + b * d.tq * d.c;
    const double* mb = mask ? mask->ptr() + (b % masks) * d.tq * d.tk : nullptr;
    for (std::int64_t h = 0; h < d.heads; ++h) {
      double* p = probs + (b * d.heads + h) * d.tq * d.tk;
      const std::int64_t off = h * d.hd;
      for (std::int64_t i = 0; i < d.tq; ++i) {
        double* row = p + i * d.tk;
        double mx = -INFINITY;
        for (std::int64_t j = 0; j < d.tk; ++j) {
          double s = 0.0;
          for (std::int64_t e = 0; e < d.hd; ++e) s += qb[i * d.c + off + e] * kb[j * d.c + off + e];
          s *= scale;
          if (bias) s += bias[(h * d.tq + i) * d.tk + j];
          if (mb) s += mb[i * d.tk + j];
          row[j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::int64_t j = 0; j < d.tk; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        for (std::int64_t j = 0; j < d.tk; ++j) row[j] /= z;
        double* orow = ob + i * d.c + off;
        for (std::int64_t e = 0; e < d.hd; ++e) orow[e] = 0.0;
        for (std::int64_t j = 0; j < d.tk; ++j) {
          const double pj = row[j];
          const double* vrow = vb + j * d.c + off;
          for (std::int64_t e = 0; e < d.hd; ++e) orow[e] += pj * vrow[e];
        }
      }
    }
  }
}

Var project(Var x, Var w, Var b) { return ops::linear(x, w, b); }

// Per-head [heads, T, T] bias gathered from the relative offset table.
std::optional<Var> relative_bias(const AttentionConfig& cfg, const AttentionWeights& wts) {
  if (!cfg.relative_position_bias) return std::nullopt;
  if (!wts.bias_table) throw ConfigError("relative position bias enabled without a bias table");
  const std::int64_t t = static_cast<std::int64_t>(cfg.window) * cfg.window;
  const auto rel = relative_position_index(cfg.window);
  std::vector<std::int64_t> index(static_cast<std::size_t>(cfg.heads * t * t));
  for (int hh = 0; hh < cfg.heads; ++hh)
    for (std::int64_t ij = 0; ij < t * t; ++ij)
      index[static_cast<std::size_t>(hh * t * t + ij)] = rel[static_cast<std::size_t>(ij)] * cfg.heads + hh;
  return ops::gather(*wts.bias_table, std::move(index), Shape{cfg.heads, t, t});
}

// Shared body of self- and cross-attention over images.
Var windowed_attention(Var query_src, Var kv_src, const AttentionConfig& cfg, const AttentionWeights& wts) {
  cfg.validate();
  if (query_src.shape() != kv_src.shape()) {
    throw ShapeError("mhca: query and key/value sources differ in shape: " + to_string(query_src.shape()) + " vs " +
                     to_string(kv_src.shape()));
  }
  const Shape& s = query_src.shape();
  if (s.size() != 4 || s[1] != cfg.channels()) {
    throw ShapeError("attention expects " + std::to_string(cfg.channels()) + " channels, got " + to_string(s));
  }
  const std::int64_t n = s[0], h = s[2], w = s[3], win = cfg.window;
  const bool self = query_src.id == kv_src.id;
  Var qs = query_src, ks = kv_src;
  std::int64_t shift = 0;
  Tensor mask;
  if (cfg.shifted && std::min(h, w) > win) {
    shift = win / 2;
    qs = ops::roll_hw(qs, -shift, -shift);
    ks = self ? qs : ops::roll_hw(ks, -shift, -shift);
    mask = shifted_window_mask(h, w, cfg.window);
  }
  const Var qt = window_partition(qs, win);
  const Var kt = self ? qt : window_partition(ks, win);
  const Var q = project(qt, wts.q_w, wts.q_b);
  const Var k = project(kt, wts.k_w, wts.k_b);
  const Var v = project(kt, wts.v_w, wts.v_b);
  const Var a = scaled_dot_attention(q, k, v, cfg.heads, relative_bias(cfg, wts), shift ? &mask : nullptr);
  const Var o = project(a, wts.o_w, wts.o_b);
  Var img = window_merge(o, win, n, h, w);
  if (shift) img = ops::roll_hw(img, shift, shift);
  return img;
}

}  // namespace

Var window_partition(Var x, std::int64_t window) {
  const WindowGeometry g = geometry(x.shape(), window);
  Tensor y(Shape{g.n * g.nh * g.nw, window * window, g.c});
  partition_kernel(g, x.value().ptr(), y.ptr());
  return x.tape->record("window_partition", std::move(y), {x}, [x, g](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    Tensor back(t.value(x).shape());
    merge_kernel(g, t.grad(self).ptr(), back.ptr());
    auto gx = t.grad_buffer(x.id);
    for (std::int64_t i = 0; i < back.numel(); ++i) gx[i] += back[i];
  });
}

Var window_merge(Var tokens, std::int64_t window, std::int64_t n, std::int64_t h, std::int64_t w) {
  const Shape& ts = tokens.shape();
  if (ts.size() != 3) throw ShapeError("window_merge expects [B,T,C], got " + to_string(ts));
  const WindowGeometry g = geometry(Shape{n, ts[2], h, w}, window);
  if (ts[0] != g.n * g.nh * g.nw || ts[1] != window * window) {
    throw ShapeError("window_merge: token layout " + to_string(ts) + " does not match the image geometry");
  }
  Tensor y(Shape{n, ts[2], h, w});
  merge_kernel(g, tokens.value().ptr(), y.ptr());
  return tokens.tape->record("window_merge", std::move(y), {tokens}, [tokens, g](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(tokens)) return;
    Tensor back(t.value(tokens).shape());
    partition_kernel(g, t.grad(self).ptr(), back.ptr());
    auto gt = t.grad_buffer(tokens.id);
    for (std::int64_t i = 0; i < back.numel(); ++i) gt[i] += back[i];
  });
}

Var scaled_dot_attention(Var q, Var k, Var v, int heads, std::optional<Var> bias, const Tensor* mask) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  if (qs.size() != 3 || ks.size() != 3 || v.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2]) {
    throw ShapeError("scaled_dot_attention: incompatible q/k/v shapes " + to_string(qs) + ", " + to_string(ks) + ", " +
                     to_string(v.shape()));
  }
  if (heads < 1 || qs[2] % heads != 0) throw ShapeError("scaled_dot_attention: channels not divisible by heads");
  const AttnDims d{qs[0], qs[1], ks[1], qs[2], heads, qs[2] / heads};
  if (bias && bias->shape() != Shape{d.heads, d.tq, d.tk}) throw ShapeError("scaled_dot_attention: bias shape mismatch");
  if (mask && (mask->rank() != 3 || mask->dim(1) != d.tq || mask->dim(2) != d.tk || d.batch % mask->dim(0) != 0)) {
    throw ShapeError("scaled_dot_attention: mask shape mismatch");
  }
  Tensor probs(Shape{d.batch, d.heads, d.tq, d.tk});
  Tensor out(Shape{d.batch, d.tq, d.c});
  attention_forward(d, q.value().ptr(), k.value().ptr(), v.value().ptr(), bias ? bias->value().ptr() : nullptr, mask,
                    probs.ptr(), out.ptr());

  std::vector<Var> parents{q, k, v};
  if (bias) parents.push_back(*bias);
  return q.tape->record("attention", std::move(out), parents,
                        [q, k, v, bias, d, probs = std::move(probs)](Tape& t, std::uint32_t self) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.hd));
    const Tensor& g = t.grad(self);
    const double* qv = t.value(q).ptr();
    const double* kv = t.value(k).ptr();
    const double* vv = t.value(v).ptr();
    double* gq = t.requires_grad(q) ? t.grad_buffer(q.id).data() : nullptr;
    double* gk = t.requires_grad(k) ? t.grad_buffer(k.id).data() : nullptr;
    double* gv = t.requires_grad(v) ? t.grad_buffer(v.id).data() : nullptr;
    double* gbias = (bias && t.requires_grad(*bias)) ? t.grad_buffer(bias->id).data() : nullptr;
    std::vector<double> ds(static_cast<std::size_t>(d.tq * d.tk));
    for (std::int64_t b = 0; b < d.batch; ++b) {
      for (std::int64_t h = 0; h < d.heads; ++h) {
        const double* p = probs.ptr() + (b * d.heads + h) * d.tq * d.tk;
        const std::int64_t off = h * d.hd;
        for (std::int64_t i = 0; i < d.tq; ++i) {
          const double* go = g.ptr() + (b * d.tq + i) * d.c + off;
          double dot = 0.0;
          for (std::int64_t j = 0; j < d.tk; ++j) {
            const double* vrow = vv + (b * d.tk + j) * d.c + off;
            double dp = 0.0;
            for (std::int64_t e = 0; e < d.hd; ++e) dp += go[e] * vrow[e];
            ds[static_cast<std::size_t>(i * d.tk + j)] = dp;
            dot += dp * p[i * d.tk + j];
            if (gv) {
              double* gvrow = gv + (b * d.tk + j) * d.c + off;
              for (std::int64_t e = 0; e < d.hd; ++e) gvrow[e] += p[i * d.tk + j] * go[e];
            }
          }
          for (std::int64_t j = 0; j < d.tk; ++j) {
            auto& s = ds[static_cast<std::size_t>(i * d.tk + j)];
            s = p[i * d.tk + j] * (s - dot);
          }
        }
        if (gbias) {
          double* gb = gbias + h * d.tq * d.tk;
          for (std::int64_t ij = 0; ij < d.tq * d.tk; ++ij) gb[ij] += ds[static_cast<std::size_t>(ij)];
        }
        for (std::int64_t i = 0; i < d.tq; ++i) {
          for (std::int64_t j = 0; j < d.tk; ++j) {
            const double s = ds[static_cast<std::size_t>(i * d.tk + j)] * scale;
            if (s == 0.0) continue;
            const double* qrow = qv + (b * d.tq + i) * d.c + off;
            const double* krow = kv + (b * d.tk + j) * d.c + off;
            if (gq) {
              double* gqrow = gq + (b * d.tq + i) * d.c + off;
              for (std::int64_t e = 0; e < d.hd; ++e) gqrow[e] += s * krow[e];
            }
            if (gk) {
              double* gkrow = gk + (b * d.tk + j) * d.c + off;
              for (std::int64_t e = 0; e < d.hd; ++e) gkrow[e] += s * qrow[e];
            }
          }
        }
      }
    }
  });
}

Tensor attention_probabilities(const Tensor& q, const Tensor& k, int heads) {
  if (q.rank() != 3 || k.rank() != 3 || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2) || q.dim(2) % heads != 0) {
    throw ShapeError("attention_probabilities: incompatible shapes");
  }
  const AttnDims d{q.dim(0), q.dim(1), k.dim(1), q.dim(2), heads, q.dim(2) / heads};
  Tensor probs(Shape{d.batch, d.heads, d.tq, d.tk});
  Tensor out(Shape{d.batch, d.tq, d.c});
  attention_forward(d, q.ptr(), k.ptr(), k.ptr(), nullptr, nullptr, probs.ptr(), out.ptr());
  return probs;
}

Var window_mhsa(Var tokens, const AttentionConfig& cfg, const AttentionWeights& wts) {
  cfg.validate();
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[2] != cfg.channels()) {
    throw ShapeError("window_mhsa: expected token channels " + std::to_string(cfg.channels()) + ", got " + to_string(s));
  }
  const Var q = project(tokens, wts.q_w, wts.q_b);
  const Var k = project(tokens, wts.k_w, wts.k_b);
  const Var v = project(tokens, wts.v_w, wts.v_b);
  if (cfg.relative_position_bias && s[1] != static_cast<std::int64_t>(cfg.window) * cfg.window) {
    throw ShapeError("window_mhsa: relative position bias needs w*w tokens per window");
  }
  return project(scaled_dot_attention(q, k, v, cfg.heads, relative_bias(cfg, wts)), wts.o_w, wts.o_b);
}

Var mhca(Var query_src, Var kv_src, const AttentionConfig& cfg, const AttentionWeights& weights) {
  return windowed_attention(query_src, kv_src, cfg, weights);
}

Var window_mhsa_image(Var x, const AttentionConfig& cfg, const AttentionWeights& weights) {
  return windowed_attention(x, x, cfg, weights);
}

std::vector<std::int64_t> relative_position_index(int window) {
  const std::int64_t w = window, t = w * w, span = 2 * w - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(t * t));
  for (std::int64_t a = 0; a < t; ++a)
    for (std::int64_t b = 0; b < t; ++b) {
      const std::int64_t dy = a / w - b / w + w - 1;
      const std::int64_t dx = a % w - b % w + w - 1;
      idx[static_cast<std::size_t>(a * t + b)] = dy * span + dx;
    }
  return idx;
}

Tensor shifted_window_mask(std::int64_t h, std::int64_t w, int window) {
  const std::int64_t win = window, shift = win / 2;
  auto region = [&](std::int64_t v, std::int64_t extent) -> std::int64_t {
    if (v < extent - win) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  const std::int64_t nh = h / win, nw = w / win, t = win * win;
  Tensor mask(Shape{nh * nw, t, t});
  for (std::int64_t wy = 0; wy < nh; ++wy)
    for (std::int64_t wx = 0; wx < nw; ++wx) {
      std::vector<std::int64_t> id(static_cast<std::size_t>(t));
      for (std::int64_t i = 0; i < t; ++i) {
        const std::int64_t y = wy * win + i / win, x = wx * win + i % win;
        id[static_cast<std::size_t>(i)] = region(y, h) * 3 + region(x, w);
      }
      double* m = mask.ptr() + (wy * nw + wx) * t * t;
      for (std::int64_t a = 0; a < t; ++a)
        for (std::int64_t b = 0; b < t; ++b)
          m[a * t + b] = id[static_cast<std::size_t>(a)] == id[static_cast<std::size_t>(b)] ? 0.0 : -100.0;
    }
  return mask;
}

}  // namespace wfn
