#include "wfn/blocks.hpp"

namespace wfn {

AttentionConfig BlockConfig::attention_for(std::int64_t channels) const {
  AttentionConfig a = attention;
  if (a.heads < 1 || channels % a.heads != 0) {
    throw ConfigError(std::to_string(channels) + " channels are not divisible by " + std::to_string(a.heads) +
                      " attention heads");
  }
  a.head_dim = static_cast<int>(channels / a.heads);
  a.validate();
  return a;
}

AttentionParams AttentionParams::create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                        const AttentionConfig& cfg, Initializer& init) {
  AttentionParams p;
  auto linear = [&](const char* name, std::size_t& w, std::size_t& b) {
    w = ps.add(prefix + "." + name + ".weight", init.truncated_normal(Shape{channels, channels}));
    b = ps.add(prefix + "." + name + ".bias", Tensor::zeros(Shape{channels}));
  };
  linear("q", p.q_w, p.q_b);
  linear("k", p.k_w, p.k_b);
  linear("v", p.v_w, p.v_b);
  linear("proj", p.o_w, p.o_b);
  if (cfg.relative_position_bias) {
    const std::int64_t span = 2 * static_cast<std::int64_t>(cfg.window) - 1;
    p.bias_table = ps.add(prefix + ".relative_bias", init.truncated_normal(Shape{span * span, cfg.heads}));
  }
  return p;
}

AttentionWeights AttentionParams::bind(const BoundParameters& b) const {
  AttentionWeights w{b[q_w], b[q_b], b[k_w], b[k_b], b[v_w], b[v_b], b[o_w], b[o_b], std::nullopt};
  if (bias_table) w.bias_table = b[*bias_table];
  return w;
}

std::int64_t AttentionParams::count(std::int64_t channels, const AttentionConfig& cfg) {
  std::int64_t n = 4 * (channels * channels + channels);
  if (cfg.relative_position_bias) {
    const std::int64_t span = 2 * static_cast<std::int64_t>(cfg.window) - 1;
    n += span * span * cfg.heads;
  }
  return n;
}

ConvParams ConvParams::create(ParameterSet& ps, const std::string& prefix, const ConvSpec& spec, Initializer& init,
                              InitKind kind) {
  spec.validate();
  ConvParams p;
  p.spec = spec;
  const Shape ws{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  Tensor w;
  switch (kind) {
    case InitKind::FanInUniform: w = init.fan_in_uniform(ws, spec.in_channels * spec.kernel * spec.kernel); break;
    case InitKind::TruncatedNormal: w = init.truncated_normal(ws); break;
    case InitKind::Zero: w = Tensor::zeros(ws); break;
  }
  p.w = ps.add(prefix + ".weight", std::move(w));
  if (spec.bias) p.b = ps.add(prefix + ".bias", Tensor::zeros(Shape{spec.out_channels}));
  return p;
}

ConvParams ConvParams::create_transposed(ParameterSet& ps, const std::string& prefix, const ConvSpec& spec,
                                         std::int64_t output_padding, Initializer& init) {
  spec.validate();
  ConvParams p;
  p.spec = spec;
  p.transposed = true;
  p.output_padding = output_padding;
  const Shape ws{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel};
  p.w = ps.add(prefix + ".weight", init.fan_in_uniform(ws, spec.in_channels * spec.kernel * spec.kernel));
  if (spec.bias) p.b = ps.add(prefix + ".bias", Tensor::zeros(Shape{spec.out_channels}));
  return p;
}

Var ConvParams::forward(const BoundParameters& bp, Var x) const {
  std::optional<Var> bias;
  if (b) bias = bp[*b];
  if (transposed) return ops::conv_transpose2d(x, bp[w], bias, spec, output_padding);
  return ops::conv2d(x, bp[w], bias, spec);
}

std::int64_t ConvParams::count() const {
  return spec.out_channels * spec.in_channels * spec.kernel * spec.kernel + (spec.bias ? spec.out_channels : 0);
}

std::int64_t ConvParams::macs(std::int64_t h, std::int64_t w) const {
  const std::int64_t per_position = spec.out_channels * spec.in_channels * spec.kernel * spec.kernel;
  if (transposed) return per_position * h * w;  // one scatter per input position
  return per_position * spec.output_extent(h) * spec.output_extent(w);
}

std::int64_t attention_macs(std::int64_t channels, std::int64_t h, std::int64_t w, const AttentionConfig& cfg) {
  const std::int64_t tokens = h * w;
  const std::int64_t per_window = static_cast<std::int64_t>(cfg.window) * cfg.window;
  return 4 * channels * channels * tokens + 2 * tokens * per_window * channels;
}

namespace {

ConvSpec conv1x1(std::int64_t in, std::int64_t out) { return ConvSpec{in, out, 1, 1, 1, 0, true}; }
ConvSpec conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1, std::int64_t dilation = 1) {
  return ConvSpec{in, out, 3, stride, dilation, dilation, true};
}

}  // namespace

TransformerStack TransformerStack::create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                          const BlockConfig& cfg, Initializer& init) {
  TransformerStack s;
  s.channels_ = channels;
  s.attention_ = cfg.attention_for(channels);
  s.ln1_g_ = ps.add(prefix + ".norm1.gamma", Tensor::full(Shape{channels}, 1.0));
  s.ln1_b_ = ps.add(prefix + ".norm1.beta", Tensor::zeros(Shape{channels}));
  s.attn_ = AttentionParams::create(ps, prefix + ".attn", channels, s.attention_, init);
  if (cfg.use_parallel_conv) {
    s.conv_branch_ = ConvParams::create(ps, prefix + ".parallel_conv", conv3x3(channels, channels), init);
  }
  s.ln2_g_ = ps.add(prefix + ".norm2.gamma", Tensor::full(Shape{channels}, 1.0));
  s.ln2_b_ = ps.add(prefix + ".norm2.beta", Tensor::zeros(Shape{channels}));
  const std::int64_t hidden = channels * cfg.mlp_ratio;
  s.mlp_in_ = ConvParams::create(ps, prefix + ".mlp.fc1", conv1x1(channels, hidden), init, InitKind::TruncatedNormal);
  s.mlp_out_ = ConvParams::create(ps, prefix + ".mlp.fc2", conv1x1(hidden, channels), init, InitKind::TruncatedNormal);
  return s;
}

Var TransformerStack::forward(const BoundParameters& b, Var y) const {
  Var a = window_mhsa_image(ops::layer_norm(y, b[ln1_g_], b[ln1_b_], 1), attention_, attn_.bind(b));
  if (conv_branch_) a = ops::mul(a, conv_branch_->forward(b, y));
  const Var y1 = ops::add(y, a);
  const Var n2 = ops::layer_norm(y1, b[ln2_g_], b[ln2_b_], 1);
  const Var m = mlp_out_.forward(b, ops::gelu(mlp_in_.forward(b, n2)));
  return ops::add(y1, m);
}

std::int64_t TransformerStack::parameter_count() const {
  return 4 * channels_ + AttentionParams::count(channels_, attention_) + (conv_branch_ ? conv_branch_->count() : 0) +
         mlp_in_.count() + mlp_out_.count();
}

std::int64_t TransformerStack::macs(std::int64_t h, std::int64_t w) const {
  return attention_macs(channels_, h, w, attention_) + (conv_branch_ ? conv_branch_->macs(h, w) : 0) +
         mlp_in_.macs(h, w) + mlp_out_.macs(h, w);
}

WaveletFormerBlock WaveletFormerBlock::create(ParameterSet& ps, const std::string& prefix, const BlockConfig& cfg,
                                              Initializer& init) {
  WaveletFormerBlock blk;
  blk.cfg_ = cfg;
  const std::int64_t stacked = 4 * cfg.in_channels;
  if (!cfg.use_dwt) {
    blk.down_ = ConvParams::create(ps, prefix + ".down", conv3x3(cfg.in_channels, stacked, 2), init);
  }
  blk.proj_ = ConvParams::create(ps, prefix + ".subband_proj", conv1x1(stacked, cfg.out_channels), init);
  blk.stack_ = TransformerStack::create(ps, prefix, cfg.out_channels, cfg, init);
  return blk;
}

Var WaveletFormerBlock::project(const BoundParameters& b, Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels) {
    throw ShapeError("WaveletFormer expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     to_string(s));
  }
  if (s[2] % 2 || s[3] % 2) throw ShapeError("WaveletFormer needs even spatial extents, got " + to_string(s));
  const Var bands = down_ ? down_->forward(b, x) : ops::dwt2d(x, cfg_.wavelet);
  return proj_.forward(b, bands);
}

Var WaveletFormerBlock::forward(const BoundParameters& b, Var x) const { return stack_.forward(b, project(b, x)); }

std::int64_t WaveletFormerBlock::parameter_count() const {
  return (down_ ? down_->count() : 0) + proj_.count() + stack_.parameter_count();
}

std::int64_t WaveletFormerBlock::macs(std::int64_t h, std::int64_t w) const {
  return (down_ ? down_->macs(h, w) : 0) + proj_.macs(h / 2, w / 2) + stack_.macs(h / 2, w / 2);
}

IWaveletFormerBlock IWaveletFormerBlock::create(ParameterSet& ps, const std::string& prefix, const BlockConfig& cfg,
                                                Initializer& init) {
  IWaveletFormerBlock blk;
  blk.cfg_ = cfg;
  const std::int64_t stacked = 4 * cfg.out_channels;
  blk.proj_ = ConvParams::create(ps, prefix + ".subband_proj", conv1x1(cfg.in_channels, stacked), init);
  if (!cfg.use_dwt) {
    blk.up_ = ConvParams::create_transposed(ps, prefix + ".up", conv3x3(stacked, cfg.out_channels, 2), 1, init);
  }
  blk.stack_ = TransformerStack::create(ps, prefix, cfg.out_channels, cfg, init);
  return blk;
}

Var IWaveletFormerBlock::forward(const BoundParameters& b, Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels) {
    throw ShapeError("IWaveletFormer expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     to_string(s));
  }
  const Var groups = proj_.forward(b, x);
  const Var up = up_ ? up_->forward(b, groups) : ops::idwt2d(groups, cfg_.wavelet);
  return stack_.forward(b, up);
}

std::int64_t IWaveletFormerBlock::parameter_count() const {
  return proj_.count() + (up_ ? up_->count() : 0) + stack_.parameter_count();
}

std::int64_t IWaveletFormerBlock::macs(std::int64_t h, std::int64_t w) const {
  return proj_.macs(h, w) + (up_ ? up_->macs(h, w) : 0) + stack_.macs(2 * h, 2 * w);
}

FeatureAggregation FeatureAggregation::create(ParameterSet& ps, const std::string& prefix, std::int64_t channels,
                                              const AttentionConfig& attention, Initializer& init) {
  FeatureAggregation f;
  f.channels_ = channels;
  f.attention_ = attention;
  if (attention.heads < 1 || channels % attention.heads != 0) {
    throw ConfigError("FAM: channels not divisible by attention heads");
  }
  f.attention_.head_dim = static_cast<int>(channels / attention.heads);
  f.attn_ = AttentionParams::create(ps, prefix + ".mhca", channels, f.attention_, init);
  return f;
}

Var FeatureAggregation::attention_map(const BoundParameters& b, Var f_out, Var f_idwt) const {
  return mhca(f_out, f_idwt, attention_, attn_.bind(b));
}

Var FeatureAggregation::forward(const BoundParameters& b, Var f_out, Var f_idwt) const {
  if (f_out.shape() != f_idwt.shape()) {
    throw ShapeError("FAM inputs differ in shape: " + to_string(f_out.shape()) + " vs " + to_string(f_idwt.shape()));
  }
  const Var gate = ops::sigmoid(attention_map(b, f_out, f_idwt));
  return ops::add(ops::mul(gate, f_idwt), f_out);
}

std::int64_t FeatureAggregation::parameter_count() const { return AttentionParams::count(channels_, attention_); }

std::int64_t FeatureAggregation::macs(std::int64_t h, std::int64_t w) const {
  return attention_macs(channels_, h, w, attention_);
}

AsppBlock AsppBlock::create(ParameterSet& ps, const std::string& prefix, std::int64_t in_channels,
                            std::int64_t out_channels, Initializer& init) {
  AsppBlock a;
  for (int i = 0; i < 3; ++i) {
    a.branches_[i] = ConvParams::create(ps, prefix + ".rate" + std::to_string(kRates[i]),
                                        conv3x3(in_channels, in_channels, 1, kRates[i]), init);
  }
  a.reduce_ = ConvParams::create(ps, prefix + ".reduce", conv1x1(3 * in_channels, out_channels), init);
  return a;
}

Var AsppBlock::forward(const BoundParameters& b, Var x) const {
  std::vector<Var> outs;
  for (const auto& br : branches_) outs.push_back(ops::relu(br.forward(b, x)));
  return reduce_.forward(b, ops::concat(outs, 1));
}

std::int64_t AsppBlock::parameter_count() const {
  return branches_[0].count() + branches_[1].count() + branches_[2].count() + reduce_.count();
}

std::int64_t AsppBlock::macs(std::int64_t h, std::int64_t w) const {
  return branches_[0].macs(h, w) + branches_[1].macs(h, w) + branches_[2].macs(h, w) + reduce_.macs(h, w);
}

}  // namespace wfn
