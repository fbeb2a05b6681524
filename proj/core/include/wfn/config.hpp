#pragma once

#include <filesystem>
#include <string>

#include "wfn/data.hpp"
#include "wfn/keyvalue.hpp"
#include "wfn/network.hpp"
#include "wfn/optim.hpp"

namespace wfn {

/// Everything a training run needs, read from a `key = value` file.
/// Unknown keys are rejected.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  SynthSpec synth;
  double t_min = 0.05;
  std::string data_dir;
  std::string out_dir;

  void validate() const;
  /// Every key with its resolved value, network keys first.
  KeyValues to_key_values() const;
  std::string format() const { return format_key_values(to_key_values()); }
  /// Applies entries on top of the defaults.
  static RunConfig from_key_values(const KeyValues& entries);
  static RunConfig parse(std::string_view text) { return from_key_values(parse_key_values(text)); }
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace wfn
