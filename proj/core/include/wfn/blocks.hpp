#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "wfn/attention.hpp"
#include "wfn/ops.hpp"
#include "wfn/params.hpp"
#include "wfn/wavelet.hpp"

namespace wfn {

/// Hyperparameters shared by the WaveletFormer and IWaveletFormer blocks.
/// attention.head_dim is ignored; it is derived as out_channels / heads.
struct BlockConfig {
  std::int64_t in_channels = 4;
  std::int64_t out_channels = 8;
  AttentionConfig attention;
  WaveletFamily wavelet = WaveletFamily::Db2;
  std::int64_t mlp_ratio = 4;
  /// When false, DWT becomes a stride-2 3x3 conv C -> 4C and IDWT a stride-2
  /// transposed conv 4C -> C.
  bool use_dwt = true;
  /// When false the attention residual is plain MHSA without the conv gate.
  bool use_parallel_conv = true;

  AttentionConfig attention_for(std::int64_t channels) const;
};

/// Indices of one attention layer's parameters inside a ParameterSet.
struct AttentionParams {
  std::size_t q_w = 0, q_b = 0, k_w = 0, k_b = 0, v_w = 0, v_b = 0, o_w = 0, o_b = 0;
  std::optional<std::size_t> bias_table;

  static AttentionParams create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                const AttentionConfig& cfg, Initializer& init);
  AttentionWeights bind(const BoundParameters& b) const;
  static std::int64_t count(std::int64_t channels, const AttentionConfig& cfg);
};

enum class InitKind { FanInUniform, TruncatedNormal, Zero };

/// Indices of one convolution's weight and bias.
struct ConvParams {
  ConvSpec spec;
  std::size_t w = 0;
  std::optional<std::size_t> b;
  bool transposed = false;
  std::int64_t output_padding = 0;

  static ConvParams create(ParameterSet& ps, const std::string& prefix, const ConvSpec& spec, Initializer& init,
                           InitKind kind = InitKind::FanInUniform);
  static ConvParams create_transposed(ParameterSet& ps, const std::string& prefix, const ConvSpec& spec,
                                      std::int64_t output_padding, Initializer& init);
  Var forward(const BoundParameters& b, Var x) const;
  std::int64_t count() const;
  /// Multiply-accumulates for an input of the given extents.
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
};

/// y' = y + MHSA(LN(y)) (x) Conv3x3(y);  y'' = y' + MLP(LN(y')).
/// The conv gate is omitted when use_parallel_conv is false.
class TransformerStack {
 public:
  static TransformerStack create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                 const BlockConfig& cfg, Initializer& init);
  Var forward(const BoundParameters& b, Var y) const;
  std::int64_t parameter_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;

 private:
  std::int64_t channels_ = 0;
  AttentionConfig attention_;
  std::size_t ln1_g_ = 0, ln1_b_ = 0, ln2_g_ = 0, ln2_b_ = 0;
  ConvParams mlp_in_, mlp_out_;
  AttentionParams attn_;
  std::optional<ConvParams> conv_branch_;
};

/// Encoder block: DWT, 1x1 projection of the stacked (LL, LH, HL, HH)
/// subbands to out_channels, then the transformer stack at half resolution.
class WaveletFormerBlock {
 public:
  static WaveletFormerBlock create(ParameterSet& ps, const std::string& prefix, const BlockConfig& cfg,
                                   Initializer& init);
  /// [N,Cin,H,W] -> [N,Cout,H/2,W/2]
  Var forward(const BoundParameters& b, Var x) const;
  /// Output of the subband projection alone (the residual stream entry).
  Var project(const BoundParameters& b, Var x) const;
  std::int64_t parameter_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
  const BlockConfig& config() const { return cfg_; }

 private:
  BlockConfig cfg_;
  std::optional<ConvParams> down_;
  ConvParams proj_;
  TransformerStack stack_;
};

/// Decoder block: 1x1 projection to 4*out_channels, IDWT of the four groups,
/// then the transformer stack at double resolution.
class IWaveletFormerBlock {
 public:
  static IWaveletFormerBlock create(ParameterSet& ps, const std::string& prefix, const BlockConfig& cfg,
                                    Initializer& init);
  /// [N,Cin,H,W] -> [N,Cout,2H,2W]
  Var forward(const BoundParameters& b, Var x) const;
  std::int64_t parameter_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
  const BlockConfig& config() const { return cfg_; }

 private:
  BlockConfig cfg_;
  ConvParams proj_;
  std::optional<ConvParams> up_;
  TransformerStack stack_;
};

/// Feature aggregation: Y = MHCA(f_out, f_idwt), out = sigmoid(Y) (x) f_idwt + f_out.
class FeatureAggregation {
 public:
  static FeatureAggregation create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                   const AttentionConfig& attention, Initializer& init);
  Var forward(const BoundParameters& b, Var f_out, Var f_idwt) const;
  /// The pre-sigmoid cross-attention map Y.
  Var attention_map(const BoundParameters& b, Var f_out, Var f_idwt) const;
  std::int64_t parameter_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;

 private:
  std::int64_t channels_ = 0;
  AttentionConfig attention_;
  AttentionParams attn_;
};

/// Atrous spatial pyramid pooling: 3x3 branches at dilation 3, 6 and 9
/// (ReLU, same padding), concatenated and reduced by a 1x1 conv.
class AsppBlock {
 public:
  static constexpr std::int64_t kRates[3] = {3, 6, 9};

  static AsppBlock create(ParameterSet& ps, const std::string& prefix, std::int64_t in_channels,
                          std::int64_t out_channels, Initializer& init);
  Var forward(const BoundParameters& b, Var x) const;
  std::int64_t parameter_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
  const ConvParams& branch(int i) const { return branches_[i]; }
  const ConvParams& reduce() const { return reduce_; }

 private:
  ConvParams branches_[3];
  ConvParams reduce_;
};

/// Window attention multiply-accumulates for a C-channel h x w map:
/// four C x C projections per token plus the QK^T and AV products.
std::int64_t attention_macs(std::int64_t channels, std::int64_t h, std::int64_t w, const AttentionConfig& cfg);

}  // namespace wfn
