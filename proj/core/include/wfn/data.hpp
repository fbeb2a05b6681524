#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wfn/tensor.hpp"

namespace wfn {

/// A hazy observation and its clean scene, both [3,H,W] in [0,1].
struct ImagePair {
  std::string id;
  Tensor hazy;
  Tensor clean;
};

/// Parameters of I = J t + A (1 - t) with t = exp(-beta d).
struct HazeParams {
  std::array<double, 3> airlight{0.8, 0.8, 0.8};
  double beta = 1.0;
  Tensor depth;  // [H,W], non-negative
  double t_min = 0.05;

  void validate() const;
};

enum class DepthKind { Ramp, Radial, Blocks };
DepthKind parse_depth_kind(std::string_view name);
std::string_view depth_kind_name(DepthKind kind);

/// exp(-beta d), optionally clamped below at t_min.
Tensor transmission_map(const Tensor& depth, double beta, std::optional<double> t_min = std::nullopt);
/// Per pixel I = J t + A_c (1 - t).
Tensor apply_asm(const Tensor& clean, const HazeParams& params);
/// J = (I - A_c (1 - t)) / t. Raises NumericError if any t < t_min.
Tensor invert_asm(const Tensor& hazy, const HazeParams& params);

/// Depth field in [0,1]. Ramp: y/(H-1). Radial: distance from the image
/// centre over the centre-to-corner distance. Blocks: a 4x4 grid of
/// uniform random levels (the seed only matters for this kind).
Tensor synth_depth(std::int64_t h, std::int64_t w, DepthKind kind, std::uint64_t seed);
/// Smooth random clean scene [3,H,W] in [0,1] built from colour gradients
/// and soft blobs.
Tensor synth_scene(std::int64_t h, std::int64_t w, std::uint64_t seed);

struct SynthSpec {
  std::int64_t height = 64;
  std::int64_t width = 64;
  DepthKind depth = DepthKind::Ramp;
  double beta_min = 0.5, beta_max = 1.5;
  double airlight_min = 0.6, airlight_max = 1.0;

  void validate() const;
};

struct SynthResult {
  ImagePair pair;
  HazeParams params;
};
/// One synthetic pair; beta and a grey airlight are drawn from the given
/// ranges. Deterministic in seed.
SynthResult synth_pair(const std::string& id, const SynthSpec& spec, std::uint64_t seed);
/// Pair with explicit haze parameters applied to a synthetic scene.
ImagePair synth_pair(const std::string& id, const HazeParams& params, std::uint64_t scene_seed);

// Pixel permutations on [C,H,W] tensors.
Tensor rot90(const Tensor& img, int quarter_turns);
Tensor hflip(const Tensor& img);
Tensor crop(const Tensor& img, std::int64_t top, std::int64_t left, std::int64_t h, std::int64_t w);

struct AugmentSpec {
  std::int64_t patch = 64;
  bool rotate = true;
  bool flip = true;
  double flip_probability = 0.5;
};

/// Random square crop, then a rotation drawn from {0, 90, 180, 270} degrees,
/// then a horizontal flip with the given probability; the same transform
/// is applied to both images.
ImagePair augment(const ImagePair& pair, const AugmentSpec& spec, std::mt19937_64& rng);
ImagePair augment(const ImagePair& pair, const AugmentSpec& spec, std::uint64_t seed);

/// Binary P6 with maxval 255. Bytes map to b/255.
Tensor load_ppm(const std::filesystem::path& path);
/// Values are clamped to [0,1] and rounded half-up to bytes.
void save_ppm(const Tensor& img, const std::filesystem::path& path);
/// Dispatch on extension; only .ppm is supported.
Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& img, const std::filesystem::path& path);

/// Reads every `<id>_hazy.ppm` with its `<id>_gt.ppm`, sorted by id.
std::vector<ImagePair> load_paired_directory(const std::filesystem::path& dir);

/// [3,H,W] -> [1,3,H,W] and back.
Tensor to_batch(const std::vector<Tensor>& images);
Tensor from_batch(const Tensor& batch, std::int64_t index);

}  // namespace wfn
