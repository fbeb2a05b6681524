#pragma once

#include <cstdint>
#include <optional>

#include "wfn/autodiff.hpp"

namespace wfn {

struct AttentionConfig {
  int heads = 2;
  int head_dim = 4;
  /// Window side w; each window holds w*w tokens.
  int window = 4;
  /// Cyclic half-window shift with cross-region masking.
  bool shifted = false;
  /// Learned per-head bias indexed by relative token offset.
  bool relative_position_bias = false;

  std::int64_t channels() const { return static_cast<std::int64_t>(heads) * head_dim; }
  void validate() const;

  friend bool operator==(const AttentionConfig&, const AttentionConfig&) = default;
};

/// Projection weights of one attention layer. Linear weights are [C,C],
/// biases [C]; the optional bias table is [(2w-1)^2, heads].
struct AttentionWeights {
  Var q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  std::optional<Var> bias_table;
};

/// [N,C,H,W] -> [N*(H/w)*(W/w), w*w, C]; windows in (n, row, col) order,
/// tokens in raster order within each window.
Var window_partition(Var x, std::int64_t window);
/// Inverse of window_partition for an image of extents n x h x w.
Var window_merge(Var tokens, std::int64_t window, std::int64_t n, std::int64_t h, std::int64_t w);

/// Multi-head scaled dot-product attention over token batches.
///
/// q: [B,Tq,C], k and v: [B,Tk,C], C = heads * head_dim. Per batch and head
/// computes softmax(Q K^T / sqrt(head_dim) + bias + mask) V. `bias` is
/// [heads,Tq,Tk] and shared over the batch; `mask` is a constant
/// [M,Tq,Tk] applied to batch entry b as mask[b % M].
Var scaled_dot_attention(Var q, Var k, Var v, int heads, std::optional<Var> bias = std::nullopt,
                         const Tensor* mask = nullptr);

/// Attention weights [B,heads,Tq,Tk] for inspection; rows sum to one.
Tensor attention_probabilities(const Tensor& q, const Tensor& k, int heads);

/// Self-attention inside each window. tokens: [B, w*w, C].
Var window_mhsa(Var tokens, const AttentionConfig& cfg, const AttentionWeights& weights);

/// Windowed cross-attention: queries from query_src, keys and values from
/// kv_src, both [N,C,H,W]. Output follows query_src's layout.
Var mhca(Var query_src, Var kv_src, const AttentionConfig& cfg, const AttentionWeights& weights);

/// Windowed self-attention on an image; equals mhca(x, x).
Var window_mhsa_image(Var x, const AttentionConfig& cfg, const AttentionWeights& weights);

/// Relative offset index table [(w*w) * (w*w)] into a (2w-1)^2 bias table.
std::vector<std::int64_t> relative_position_index(int window);

/// Additive mask [nWindows, w*w, w*w] for shifted windows on an h x w image:
/// 0 inside a region, -100 across regions.
Tensor shifted_window_mask(std::int64_t h, std::int64_t w, int window);

}  // namespace wfn
