#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "wfn/blocks.hpp"
#include "wfn/keyvalue.hpp"

namespace wfn {

/// Architecture hyperparameters of the encoder/ASPP/decoder network.
struct NetworkConfig {
  int stages = 3;
  std::int64_t base_channels = 16;
  /// Stage i output width = base_channels * channel_multipliers[i].
  /// Empty means doubling per stage (2, 4, 8, ...).
  std::vector<std::int64_t> channel_multipliers;
  /// Heads and window are used; head_dim is derived per stage.
  AttentionConfig attention{2, 0, 4, false, false};
  WaveletFamily wavelet = WaveletFamily::Db2;
  std::int64_t mlp_ratio = 4;

  bool use_dwt = true;
  bool use_parallel_conv = true;
  bool use_fam = true;
  bool use_aspp = true;
  bool global_residual = true;

  /// Feature width at resolution level 0..stages (level 0 is the shallow conv).
  std::int64_t channels_at(int level) const;
  /// Input extents must be multiples of 2^stages * window.
  std::int64_t required_multiple() const;
  void validate() const;
  void check_extents(std::int64_t h, std::int64_t w) const;

  KeyValues to_key_values() const;
  /// Applies one `key = value`; returns false for keys it does not own.
  bool set(std::string_view key, std::string_view value);
  static NetworkConfig from_key_values(const KeyValues& entries);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Architecture variants used in the ablation study.
enum class Ablation { Full, NoDwt, NoParallelConv, NoFam, NoAspp };

Ablation parse_ablation(std::string_view name);
std::string_view ablation_name(Ablation a);
NetworkConfig apply_ablation(NetworkConfig cfg, Ablation a);

class Model {
 public:
  /// Deterministic initialisation from seed.
  static Model build(const NetworkConfig& cfg, std::uint64_t seed);
  /// As above, also rejecting input extents the architecture cannot take.
  static Model build(const NetworkConfig& cfg, std::uint64_t seed, std::int64_t height, std::int64_t width);

  const NetworkConfig& config() const noexcept { return cfg_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  /// x: [N,3,H,W] -> [N,3,H,W].
  Var forward(const BoundParameters& b, Var x) const;
  /// Inference without gradients.
  Tensor forward(const Tensor& x) const;
  void check_input(const Shape& s) const;

  std::int64_t parameter_count() const { return params_.total_elements(); }
  /// Multiply-accumulates of convolutions, projections and attention
  /// products for one H x W image.
  std::int64_t flop_count(std::int64_t h, std::int64_t w) const;

  const std::vector<WaveletFormerBlock>& encoders() const { return encoders_; }
  const std::vector<IWaveletFormerBlock>& decoders() const { return decoders_; }
  const std::vector<FeatureAggregation>& fams() const { return fams_; }
  const std::optional<AsppBlock>& aspp() const { return aspp_; }
  const ConvParams& head() const { return head_; }

 private:
  NetworkConfig cfg_;
  ParameterSet params_;
  ConvParams shallow_;
  std::vector<WaveletFormerBlock> encoders_;
  std::optional<AsppBlock> aspp_;
  std::vector<IWaveletFormerBlock> decoders_;  // decoders_[j] produces level j
  std::vector<FeatureAggregation> fams_;       // fams_[j] fuses at level j
  ConvParams head_;
};

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

/// Writes the binary checkpoint:
///   "WFN1" | u32 config length | config text (key = value lines)
///   | u32 parameter count | per parameter: u16 name length, name, u8 dtype
///   code (1 = float64), u8 rank, rank x u64 extents
///   | payload: every parameter's float64 values in manifest order
///   | u64 FNV-1a checksum of the payload.
/// All integers and floats are little-endian.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Rebuilds the model from the embedded config and restores every parameter.
Model load_checkpoint(const std::filesystem::path& path);
/// As above, but raises ConfigError if the embedded config differs.
Model load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size);

}  // namespace wfn
