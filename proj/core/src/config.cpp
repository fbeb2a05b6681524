#include "wfn/config.hpp"

#include <fstream>
#include <sstream>

namespace wfn {
namespace {

bool set_run_key(RunConfig& c, std::string_view k, std::string_view v) {
  TrainConfig& t = c.train;
  if (k == "steps") t.steps = parse_int(k, v);
  else if (k == "batch") t.batch = parse_int(k, v);
  else if (k == "seed") t.seed = static_cast<std::uint64_t>(parse_int(k, v));
  else if (k == "lr0") t.lr0 = parse_double(k, v);
  else if (k == "w_l1") t.weights.l1 = parse_double(k, v);
  else if (k == "w_msssim") t.weights.msssim = parse_double(k, v);
  else if (k == "w_perc") t.weights.perceptual = parse_double(k, v);
  else if (k == "ms_ssim_scales") t.ms_ssim_scales = static_cast<int>(parse_int(k, v));
  else if (k == "clip_norm") t.clip_norm = parse_double(k, v);
  else if (k == "extractor_seed") t.extractor_seed = static_cast<std::uint64_t>(parse_int(k, v));
  else if (k == "augment") t.augment = parse_bool(k, v);
  else if (k == "patch") t.augment_spec.patch = parse_int(k, v);
  else if (k == "rotate") t.augment_spec.rotate = parse_bool(k, v);
  else if (k == "flip") t.augment_spec.flip = parse_bool(k, v);
  else if (k == "flip_probability") t.augment_spec.flip_probability = parse_double(k, v);
  else if (k == "log_every") t.log_every = parse_int(k, v);
  else if (k == "checkpoint_every") t.checkpoint_every = parse_int(k, v);
  else if (k == "synth_height") c.synth.height = parse_int(k, v);
  else if (k == "synth_width") c.synth.width = parse_int(k, v);
  else if (k == "depth") c.synth.depth = parse_depth_kind(v);
  else if (k == "beta_min") c.synth.beta_min = parse_double(k, v);
  else if (k == "beta_max") c.synth.beta_max = parse_double(k, v);
  else if (k == "airlight_min") c.synth.airlight_min = parse_double(k, v);
  else if (k == "airlight_max") c.synth.airlight_max = parse_double(k, v);
  else if (k == "t_min") c.t_min = parse_double(k, v);
  else if (k == "data_dir") c.data_dir = std::string(v);
  else if (k == "out_dir") c.out_dir = std::string(v);
  else return false;
  return true;
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  train.validate();
  synth.validate();
  if (!(t_min > 0.0 && t_min <= 1.0)) throw ConfigError("t_min must lie in (0,1]");
  if (train.augment) network.check_extents(train.augment_spec.patch, train.augment_spec.patch);
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = network.to_key_values();
  const TrainConfig& t = train;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  const KeyValues rest = {
      {"steps", std::to_string(t.steps)},
      {"batch", std::to_string(t.batch)},
      {"seed", std::to_string(t.seed)},
      {"lr0", format_double(t.lr0)},
      {"w_l1", format_double(t.weights.l1)},
      {"w_msssim", format_double(t.weights.msssim)},
      {"w_perc", format_double(t.weights.perceptual)},
      {"ms_ssim_scales", std::to_string(t.ms_ssim_scales)},
      {"clip_norm", format_double(t.clip_norm)},
      {"extractor_seed", std::to_string(t.extractor_seed)},
      {"augment", b(t.augment)},
      {"patch", std::to_string(t.augment_spec.patch)},
      {"rotate", b(t.augment_spec.rotate)},
      {"flip", b(t.augment_spec.flip)},
      {"flip_probability", format_double(t.augment_spec.flip_probability)},
      {"log_every", std::to_string(t.log_every)},
      {"checkpoint_every", std::to_string(t.checkpoint_every)},
      {"synth_height", std::to_string(synth.height)},
      {"synth_width", std::to_string(synth.width)},
      {"depth", std::string(depth_kind_name(synth.depth))},
      {"beta_min", format_double(synth.beta_min)},
      {"beta_max", format_double(synth.beta_max)},
      {"airlight_min", format_double(synth.airlight_min)},
      {"airlight_max", format_double(synth.airlight_max)},
      {"t_min", format_double(t_min)},
      {"data_dir", data_dir},
      {"out_dir", out_dir},
  };
  kv.insert(kv.end(), rest.begin(), rest.end());
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValues& entries) {
  RunConfig c;
  for (const auto& [k, v] : entries) {
    if (!c.network.set(k, v) && !set_run_key(c, k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace wfn
