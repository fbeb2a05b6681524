#include "wfn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>

namespace wfn {
namespace {

void require_image(const Tensor& img, const char* where) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ShapeError(std::string(where) + ": expected [3,H,W], got " + to_string(img.shape()));
  }
}

void require_depth(const HazeParams& p, std::int64_t h, std::int64_t w) {
  if (p.depth.rank() != 2 || p.depth.dim(0) != h || p.depth.dim(1) != w) {
    throw ShapeError("depth " + to_string(p.depth.shape()) + " does not match image extents " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
}

}  // namespace

void HazeParams::validate() const {
  for (double a : airlight)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("airlight must lie in [0,1]");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(t_min > 0.0 && t_min <= 1.0)) throw ConfigError("t_min must lie in (0,1]");
  for (double d : depth.data())
    if (!(d >= 0.0)) throw ConfigError("depth must be non-negative");
}

DepthKind parse_depth_kind(std::string_view name) {
  if (name == "ramp") return DepthKind::Ramp;
  if (name == "radial") return DepthKind::Radial;
  if (name == "blocks") return DepthKind::Blocks;
  throw ConfigError("unknown depth kind '" + std::string(name) + "' (expected ramp, radial or blocks)");
}

std::string_view depth_kind_name(DepthKind kind) {
  switch (kind) {
    case DepthKind::Ramp: return "ramp";
    case DepthKind::Radial: return "radial";
    case DepthKind::Blocks: return "blocks";
  }
  return "unknown";
}

Tensor transmission_map(const Tensor& depth, double beta, std::optional<double> t_min) {
  if (!(beta >= 0.0)) throw ConfigError("transmission_map: beta must be non-negative");
  Tensor t(depth.shape());
  for (std::int64_t i = 0; i < depth.numel(); ++i) {
    if (!(depth[i] >= 0.0)) throw ConfigError("transmission_map: depth must be non-negative");
    t[i] = std::exp(-beta * depth[i]);
    if (t_min) t[i] = std::max(t[i], *t_min);
  }
  return t;
}

Tensor apply_asm(const Tensor& clean, const HazeParams& params) {
  require_image(clean, "apply_asm");
  params.validate();
  const std::int64_t h = clean.dim(1), w = clean.dim(2);
  require_depth(params, h, w);
  const Tensor t = transmission_map(params.depth, params.beta);
  Tensor out(clean.shape());
  for (std::int64_t c = 0; c < 3; ++c) {
    const double a = params.airlight[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < h * w; ++i) out[c * h * w + i] = clean[c * h * w + i] * t[i] + a * (1.0 - t[i]);
  }
  return out;
}

Tensor invert_asm(const Tensor& hazy, const HazeParams& params) {
  require_image(hazy, "invert_asm");
  params.validate();
  const std::int64_t h = hazy.dim(1), w = hazy.dim(2);
  require_depth(params, h, w);
  const Tensor t = transmission_map(params.depth, params.beta);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (t[i] < params.t_min) {
      throw NumericError("invert_asm: transmission " + std::to_string(t[i]) + " below floor " +
                         std::to_string(params.t_min));
    }
  }
  Tensor out(hazy.shape());
  for (std::int64_t c = 0; c < 3; ++c) {
    const double a = params.airlight[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < h * w; ++i) out[c * h * w + i] = (hazy[c * h * w + i] - a * (1.0 - t[i])) / t[i];
  }
  return out;
}

Tensor synth_depth(std::int64_t h, std::int64_t w, DepthKind kind, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ShapeError("synth_depth: extents must be positive");
  Tensor d(Shape{h, w});
  switch (kind) {
    case DepthKind::Ramp:
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
      break;
    case DepthKind::Radial: {
      const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
      const double rmax = std::hypot(cy, cx);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = rmax > 0.0 ? std::hypot(y - cy, x - cx) / rmax : 0.0;
      break;
    }
    case DepthKind::Blocks: {
      constexpr int kGrid = 4;
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double levels[kGrid][kGrid];
      for (auto& row : levels)
        for (double& v : row) v = u(rng);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = levels[y * kGrid / h][x * kGrid / w];
      break;
    }
  }
  return d;
}

Tensor synth_scene(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ShapeError("synth_scene: extents must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img(Shape{3, h, w});
  double base[3], gy[3], gx[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.2 + 0.5 * u(rng);
    gy[c] = 0.3 * (u(rng) - 0.5);
    gx[c] = 0.3 * (u(rng) - 0.5);
  }
  struct Blob {
    double cy, cx, r, amp[3];
  };
  std::vector<Blob> blobs(4);
  for (auto& b : blobs) {
    b.cy = u(rng);
    b.cx = u(rng);
    b.r = 0.1 + 0.2 * u(rng);
    for (double& a : b.amp) a = 0.4 * (u(rng) - 0.5);
  }
  for (std::int64_t y = 0; y < h; ++y) {
    const double fy = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (std::int64_t x = 0; x < w; ++x) {
      const double fx = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + gy[c] * (fy - 0.5) + gx[c] * (fx - 0.5);
        for (const auto& b : blobs) {
          const double dy = fy - b.cy, dx = fx - b.cx;
          v += b.amp[c] * std::exp(-(dy * dy + dx * dx) / (2.0 * b.r * b.r));
        }
        img[(c * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

void SynthSpec::validate() const {
  if (height < 1 || width < 1) throw ConfigError("synthetic image extents must be positive");
  if (!(beta_min >= 0.0 && beta_max >= beta_min)) throw ConfigError("beta range must satisfy 0 <= min <= max");
  if (!(airlight_min >= 0.0 && airlight_max <= 1.0 && airlight_max >= airlight_min)) {
    throw ConfigError("airlight range must satisfy 0 <= min <= max <= 1");
  }
}

SynthResult synth_pair(const std::string& id, const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HazeParams p;
  p.beta = spec.beta_min + (spec.beta_max - spec.beta_min) * u(rng);
  const double a = spec.airlight_min + (spec.airlight_max - spec.airlight_min) * u(rng);
  p.airlight = {a, a, a};
  const std::uint64_t depth_seed = rng();
  const std::uint64_t scene_seed = rng();
  p.depth = synth_depth(spec.height, spec.width, spec.depth, depth_seed);
  return {synth_pair(id, p, scene_seed), p};
}

ImagePair synth_pair(const std::string& id, const HazeParams& params, std::uint64_t scene_seed) {
  Tensor clean = synth_scene(params.depth.dim(0), params.depth.dim(1), scene_seed);
  Tensor hazy = apply_asm(clean, params);
  return {id, std::move(hazy), std::move(clean)};
}

Tensor rot90(const Tensor& img, int quarter_turns) {
  if (img.rank() != 3) throw ShapeError("rot90 expects [C,H,W], got " + to_string(img.shape()));
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const std::int64_t oh = k == 2 ? h : w, ow = k == 2 ? w : h;
  Tensor out(Shape{c, oh, ow});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        std::int64_t sy = 0, sx = 0;
        if (k == 1) {  // counter-clockwise
          sy = x;
          sx = w - 1 - y;
        } else if (k == 2) {
          sy = h - 1 - y;
          sx = w - 1 - x;
        } else {
          sy = h - 1 - x;
          sx = y;
        }
        out[(ch * oh + y) * ow + x] = img[(ch * h + sy) * w + sx];
      }
  return out;
}

Tensor hflip(const Tensor& img) {
  if (img.rank() != 3) throw ShapeError("hflip expects [C,H,W], got " + to_string(img.shape()));
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::int64_t r = 0; r < c * h; ++r)
    for (std::int64_t x = 0; x < w; ++x) out[r * w + x] = img[r * w + (w - 1 - x)];
  return out;
}

Tensor crop(const Tensor& img, std::int64_t top, std::int64_t left, std::int64_t h, std::int64_t w) {
  if (img.rank() != 3) throw ShapeError("crop expects [C,H,W], got " + to_string(img.shape()));
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.dim(1) || left + w > img.dim(2)) {
    throw ShapeError("crop window " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(top) +
                     "," + std::to_string(left) + ") does not fit " + to_string(img.shape()));
  }
  const std::int64_t c = img.dim(0), ih = img.dim(1), iw = img.dim(2);
  Tensor out(Shape{c, h, w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(img.ptr() + (ch * ih + top + y) * iw + left, w, out.ptr() + (ch * h + y) * w);
  return out;
}

ImagePair augment(const ImagePair& pair, const AugmentSpec& spec, std::mt19937_64& rng) {
  require_image(pair.hazy, "augment");
  if (pair.hazy.shape() != pair.clean.shape()) throw ShapeError("augment: hazy and clean shapes differ");
  const std::int64_t h = pair.hazy.dim(1), w = pair.hazy.dim(2);
  if (spec.patch < 1 || spec.patch > h || spec.patch > w) {
    throw ShapeError("augment: patch " + std::to_string(spec.patch) + " does not fit " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  std::uniform_int_distribution<std::int64_t> top_d(0, h - spec.patch), left_d(0, w - spec.patch);
  const std::int64_t top = top_d(rng), left = left_d(rng);
  const int turns = spec.rotate ? static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng)) : 0;
  const bool flip = spec.flip && std::bernoulli_distribution(spec.flip_probability)(rng);
  auto apply = [&](const Tensor& t) {
    Tensor out = rot90(crop(t, top, left, spec.patch, spec.patch), turns);
    return flip ? hflip(out) : out;
  };
  return {pair.id, apply(pair.hazy), apply(pair.clean)};
}

ImagePair augment(const ImagePair& pair, const AugmentSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return augment(pair, spec, rng);
}

Tensor load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), {}};
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> IoError { return IoError("malformed PPM '" + path.string() + "': " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    std::int64_t v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 24)) throw fail(std::string(what) + " too large");
      ++pos;
    }
    if (pos == start) throw fail(std::string("missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw fail("not a binary P6 file");
  pos = 2;
  const std::int64_t w = read_uint("width");
  const std::int64_t h = read_uint("height");
  const std::int64_t maxval = read_uint("maxval");
  if (w < 1 || h < 1) throw fail("extents must be positive");
  if (maxval != 255) throw IoError("unsupported PPM depth in '" + path.string() + "': maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("missing separator after header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w * h * 3);
  if (bytes.size() - pos < need) {
    throw fail("truncated payload (" + std::to_string(bytes.size() - pos) + " of " + std::to_string(need) + " bytes)");
  }
  Tensor img(Shape{3, h, w});
  for (std::int64_t i = 0; i < h * w; ++i)
    for (std::int64_t c = 0; c < 3; ++c) img[c * h * w + i] = bytes[pos + static_cast<std::size_t>(i * 3 + c)] / 255.0;
  return img;
}

void save_ppm(const Tensor& img, const std::filesystem::path& path) {
  require_image(img, "save_ppm");
  img.require_finite("save_ppm");
  const std::int64_t h = img.dim(1), w = img.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(h * w * 3));
  for (std::int64_t i = 0; i < h * w; ++i)
    for (std::int64_t c = 0; c < 3; ++c) {
      const double v = std::clamp(img[c * h * w + i], 0.0, 1.0);
      out[header + static_cast<std::size_t>(i * 3 + c)] = static_cast<char>(static_cast<int>(std::floor(v * 255.0 + 0.5)));
    }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

namespace {
void require_ppm(const std::filesystem::path& path) {
  if (path.extension() != ".ppm") {
    throw IoError("unsupported image format '" + path.extension().string() + "' for '" + path.string() +
                  "' (only .ppm is supported)");
  }
}
}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  require_ppm(path);
  return load_ppm(path);
}

void save_image(const Tensor& img, const std::filesystem::path& path) {
  require_ppm(path);
  save_ppm(img, path);
}

std::vector<ImagePair> load_paired_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
  constexpr std::string_view kHazy = "_hazy.ppm";
  std::map<std::string, fs::path> hazy;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kHazy.size() && name.ends_with(kHazy)) hazy[name.substr(0, name.size() - kHazy.size())] = entry.path();
  }
  if (hazy.empty()) throw IoError("no <id>_hazy.ppm files in '" + dir.string() + "'");
  std::vector<ImagePair> pairs;
  for (const auto& [id, hp] : hazy) {
    const fs::path gp = dir / (id + "_gt.ppm");
    if (!fs::exists(gp)) throw IoError("missing ground truth '" + gp.string() + "' for '" + hp.string() + "'");
    ImagePair p{id, load_ppm(hp), load_ppm(gp)};
    if (p.hazy.shape() != p.clean.shape()) throw ShapeError("pair '" + id + "' has mismatched extents");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

Tensor to_batch(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("to_batch: no images");
  const Shape& s = images.front().shape();
  Shape bs{static_cast<std::int64_t>(images.size())};
  bs.insert(bs.end(), s.begin(), s.end());
  Tensor out(bs);
  const std::int64_t n = images.front().numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ShapeError("to_batch: images differ in shape");
    std::copy_n(images[i].ptr(), n, out.ptr() + static_cast<std::int64_t>(i) * n);
  }
  return out;
}

Tensor from_batch(const Tensor& batch, std::int64_t index) {
  if (batch.rank() < 2 || index < 0 || index >= batch.dim(0)) throw ShapeError("from_batch: index out of range");
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::int64_t n = shape_numel(s);
  Tensor out(s);
  std::copy_n(batch.ptr() + index * n, n, out.ptr());
  return out;
}

}  // namespace wfn
