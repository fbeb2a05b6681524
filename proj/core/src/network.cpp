#include "wfn/network.hpp"

#include <sstream>

namespace wfn {

std::int64_t NetworkConfig::channels_at(int level) const {
  if (level == 0) return base_channels;
  if (!channel_multipliers.empty()) return base_channels * channel_multipliers.at(static_cast<std::size_t>(level - 1));
  return base_channels << level;
}

std::int64_t NetworkConfig::required_multiple() const {
  return (std::int64_t{1} << stages) * attention.window;
}

void NetworkConfig::validate() const {
  if (stages < 1 || stages > 6) throw ConfigError("stages must be in [1, 6]");
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (!channel_multipliers.empty() && static_cast<int>(channel_multipliers.size()) != stages) {
    throw ConfigError("channel_multipliers needs one entry per stage");
  }
  for (auto m : channel_multipliers)
    if (m < 1) throw ConfigError("channel multipliers must be positive");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be positive");
  if (attention.window < 1 || attention.heads < 1) throw ConfigError("attention window and heads must be positive");
  for (int l = 0; l <= stages; ++l) {
    if (channels_at(l) % attention.heads != 0) {
      throw ConfigError("width " + std::to_string(channels_at(l)) + " at level " + std::to_string(l) +
                        " is not divisible by " + std::to_string(attention.heads) + " heads");
    }
  }
}

void NetworkConfig::check_extents(std::int64_t h, std::int64_t w) const {
  const std::int64_t m = required_multiple();
  if (h < m || w < m || h % m != 0 || w % m != 0) {
    throw ShapeError("input extents " + std::to_string(h) + "x" + std::to_string(w) + " must be positive multiples of " +
                     std::to_string(m) + " (2^stages * window)");
  }
}

KeyValues NetworkConfig::to_key_values() const {
  std::string mults;
  for (std::size_t i = 0; i < channel_multipliers.size(); ++i) {
    if (i) mults += ',';
    mults += std::to_string(channel_multipliers[i]);
  }
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"stages", std::to_string(stages)},
      {"base_channels", std::to_string(base_channels)},
      {"channel_multipliers", mults},
      {"heads", std::to_string(attention.heads)},
      {"window", std::to_string(attention.window)},
      {"shifted_windows", b(attention.shifted)},
      {"relative_position_bias", b(attention.relative_position_bias)},
      {"wavelet", std::string(wavelet_name(wavelet))},
      {"mlp_ratio", std::to_string(mlp_ratio)},
      {"use_dwt", b(use_dwt)},
      {"use_parallel_conv", b(use_parallel_conv)},
      {"use_fam", b(use_fam)},
      {"use_aspp", b(use_aspp)},
      {"global_residual", b(global_residual)},
  };
}

bool NetworkConfig::set(std::string_view key, std::string_view value) {
  if (key == "stages") stages = static_cast<int>(parse_int(key, value));
  else if (key == "base_channels") base_channels = parse_int(key, value);
  else if (key == "channel_multipliers") {
    channel_multipliers.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      channel_multipliers.push_back(parse_int(key, rest.substr(0, comma)));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
  } else if (key == "heads") attention.heads = static_cast<int>(parse_int(key, value));
  else if (key == "window") attention.window = static_cast<int>(parse_int(key, value));
  else if (key == "shifted_windows") attention.shifted = parse_bool(key, value);
  else if (key == "relative_position_bias") attention.relative_position_bias = parse_bool(key, value);
  else if (key == "wavelet") wavelet = parse_wavelet_family(value);
  else if (key == "mlp_ratio") mlp_ratio = parse_int(key, value);
  else if (key == "use_dwt") use_dwt = parse_bool(key, value);
  else if (key == "use_parallel_conv") use_parallel_conv = parse_bool(key, value);
  else if (key == "use_fam") use_fam = parse_bool(key, value);
  else if (key == "use_aspp") use_aspp = parse_bool(key, value);
  else if (key == "global_residual") global_residual = parse_bool(key, value);
  else return false;
  return true;
}

NetworkConfig NetworkConfig::from_key_values(const KeyValues& entries) {
  NetworkConfig cfg;
  for (const auto& [k, v] : entries) {
    if (!cfg.set(k, v)) throw ConfigError("unknown network key '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::Full;
  if (name == "w/o-dwt") return Ablation::NoDwt;
  if (name == "w/o-parallel") return Ablation::NoParallelConv;
  if (name == "w/o-fam") return Ablation::NoFam;
  if (name == "w/o-aspp") return Ablation::NoAspp;
  throw ConfigError("unknown ablation '" + std::string(name) +
                    "' (expected full, w/o-dwt, w/o-parallel, w/o-fam or w/o-aspp)");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoDwt: return "w/o-dwt";
    case Ablation::NoParallelConv: return "w/o-parallel";
    case Ablation::NoFam: return "w/o-fam";
    case Ablation::NoAspp: return "w/o-aspp";
  }
  return "unknown";
}

NetworkConfig apply_ablation(NetworkConfig cfg, Ablation a) {
  switch (a) {
    case Ablation::Full: break;
    case Ablation::NoDwt: cfg.use_dwt = false; break;
    case Ablation::NoParallelConv: cfg.use_parallel_conv = false; break;
    case Ablation::NoFam: cfg.use_fam = false; break;
    case Ablation::NoAspp: cfg.use_aspp = false; break;
  }
  return cfg;
}

Model Model::build(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  Initializer init(seed);
  ParameterSet& ps = m.params_;

  const std::int64_t c0 = cfg.channels_at(0);
  m.shallow_ = ConvParams::create(ps, "shallow", ConvSpec{3, c0, 3, 1, 1, 1, true}, init);

  BlockConfig base;
  base.attention = cfg.attention;
  base.wavelet = cfg.wavelet;
  base.mlp_ratio = cfg.mlp_ratio;
  base.use_dwt = cfg.use_dwt;
  base.use_parallel_conv = cfg.use_parallel_conv;

  for (int i = 0; i < cfg.stages; ++i) {
    BlockConfig bc = base;
    bc.in_channels = cfg.channels_at(i);
    bc.out_channels = cfg.channels_at(i + 1);
    m.encoders_.push_back(WaveletFormerBlock::create(ps, "encoder." + std::to_string(i), bc, init));
  }
  if (cfg.use_aspp) {
    const std::int64_t cs = cfg.channels_at(cfg.stages);
    m.aspp_ = AsppBlock::create(ps, "aspp", cs, cs, init);
  }
  m.decoders_.resize(static_cast<std::size_t>(cfg.stages));
  if (cfg.use_fam) m.fams_.resize(static_cast<std::size_t>(cfg.stages));
  for (int j = cfg.stages - 1; j >= 0; --j) {
    BlockConfig bc = base;
    bc.in_channels = cfg.channels_at(j + 1);
    bc.out_channels = cfg.channels_at(j);
    m.decoders_[static_cast<std::size_t>(j)] =
        IWaveletFormerBlock::create(ps, "decoder." + std::to_string(j), bc, init);
    if (cfg.use_fam) {
      m.fams_[static_cast<std::size_t>(j)] =
          FeatureAggregation::create(ps, "fam." + std::to_string(j), cfg.channels_at(j), cfg.attention, init);
    }
  }
  m.head_ = ConvParams::create(ps, "head", ConvSpec{c0, 3, 3, 1, 1, 1, true}, init, InitKind::Zero);
  return m;
}

Model Model::build(const NetworkConfig& cfg, std::uint64_t seed, std::int64_t height, std::int64_t width) {
  cfg.validate();
  cfg.check_extents(height, width);
  return build(cfg, seed);
}

void Model::check_input(const Shape& s) const {
  if (s.size() != 4 || s[1] != 3) throw ShapeError("network input must be [N,3,H,W], got " + to_string(s));
  cfg_.check_extents(s[2], s[3]);
}

Var Model::forward(const BoundParameters& b, Var x) const {
  check_input(x.shape());
  const Var shallow = shallow_.forward(b, x);
  std::vector<Var> skips{shallow};
  Var h = shallow;
  for (std::size_t i = 0; i < encoders_.size(); ++i) {
    h = encoders_[i].forward(b, h);
    if (i + 1 < encoders_.size()) skips.push_back(h);
  }
  if (aspp_) h = aspp_->forward(b, h);
  for (int j = cfg_.stages - 1; j >= 0; --j) {
    const auto idx = static_cast<std::size_t>(j);
    const Var d = decoders_[idx].forward(b, h);
    h = cfg_.use_fam ? fams_[idx].forward(b, skips[idx], d) : ops::add(skips[idx], d);
  }
  const Var correction = head_.forward(b, h);
  return cfg_.global_residual ? ops::add(x, correction) : correction;
}

Tensor Model::forward(const Tensor& x) const {
  Tape tape;
  BoundParameters b(tape, params_, false);
  return forward(b, tape.constant(x)).value();
}

std::int64_t Model::flop_count(std::int64_t h, std::int64_t w) const {
  cfg_.check_extents(h, w);
  std::int64_t total = shallow_.macs(h, w);
  for (int i = 0; i < cfg_.stages; ++i) total += encoders_[static_cast<std::size_t>(i)].macs(h >> i, w >> i);
  if (aspp_) total += aspp_->macs(h >> cfg_.stages, w >> cfg_.stages);
  for (int j = 0; j < cfg_.stages; ++j) {
    total += decoders_[static_cast<std::size_t>(j)].macs(h >> (j + 1), w >> (j + 1));
    if (cfg_.use_fam) total += fams_[static_cast<std::size_t>(j)].macs(h >> j, w >> j);
  }
  return total + head_.macs(h, w);
}

}  // namespace wfn
