#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wfn/autodiff.hpp"

namespace wfn {

/// Geometry of a square-kernel 2D convolution.
struct ConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
  std::int64_t padding = 0;
  bool bias = true;

  /// r*(k-1)+1 taps per axis.
  std::int64_t receptive_field() const { return dilation * (kernel - 1) + 1; }
  /// floor((n + 2p - r(k-1) - 1)/s) + 1; throws ShapeError when < 1.
  std::int64_t output_extent(std::int64_t n) const;
  void validate() const;
};

namespace ops {

// Elementwise (operands must share a shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var square(Var a);
Var abs(Var a);
Var relu(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
/// x^p for x > 0, and 0 for x == 0 with p > 1.
Var pow_scalar(Var a, double p);

// Reductions to a single-element tensor.
Var sum(Var a);
Var mean(Var a);
/// Mean over the trailing H, W axes: [N,C,H,W] -> [N,C].
Var mean_hw(Var a);

/// Weighted sum of single-element tensors with fixed coefficients.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

// Layout.
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, int axis, std::int64_t start, std::int64_t length);
/// Cyclic shift of the H and W axes of an NCHW tensor.
Var roll_hw(Var a, std::int64_t shift_h, std::int64_t shift_w);
/// out[i] = table[index[i]], shaped as `shape`.
Var gather(Var table, std::vector<std::int64_t> index, Shape shape);

// Neural-network primitives.

/// Zero-padded dilated cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin,k,k], b: [Cout].
Var conv2d(Var x, Var w, std::optional<Var> b, const ConvSpec& spec);
/// Adjoint of conv2d with respect to its input. w: [Cin,Cout,k,k] where
/// Cin = spec.in_channels is the channel count of x. Output extent is
/// (n-1)s - 2p + r(k-1) + output_padding + 1.
Var conv_transpose2d(Var x, Var w, std::optional<Var> b, const ConvSpec& spec, std::int64_t output_padding = 0);
/// 2x2 average pooling with stride 2; odd trailing rows/cols are dropped.
Var avg_pool2(Var x);
/// Softmax along `axis` with max subtraction.
Var softmax(Var x, int axis);
/// Normalises over `axis`; gamma and beta have the extent of that axis.
Var layer_norm(Var x, Var gamma, Var beta, int axis, double eps = 1e-5);
/// y = x W^T + b over the last axis. w: [out, in], b: [out].
Var linear(Var x, Var w, std::optional<Var> b);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }

}  // namespace wfn
