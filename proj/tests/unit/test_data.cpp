#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "wfn/data.hpp"

namespace wfn {
namespace {

using test::random_tensor;
using test::TempDir;

HazeParams params_for(std::int64_t h, std::int64_t w, double beta, DepthKind kind = DepthKind::Ramp) {
  HazeParams p;
  p.airlight = {0.9, 0.8, 0.7};
  p.beta = beta;
  p.depth = synth_depth(h, w, kind, 5);
  return p;
}

TEST(Asm, ClosedForms) {
  const Tensor j = random_tensor({3, 4, 6}, 1, 0.0, 1.0);
  HazeParams p = params_for(4, 6, 0.0);
  EXPECT_EQ(values(apply_asm(j, p)), values(j));

  p.beta = 1.0;
  p.depth = Tensor({4, 6}, std::log(2.0));
  const Tensor i = apply_asm(j, p);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t k = 0; k < 24; ++k) EXPECT_NEAR(i[c * 24 + k], 0.5 * j[c * 24 + k] + 0.5 * p.airlight[c], 1e-15);

  const Tensor t = transmission_map(Tensor({1, 2}, 10.0), 1.0, 0.05);
  EXPECT_EQ(t[0], 0.05);
  EXPECT_NEAR(transmission_map(Tensor({1, 1}, 2.0), 0.5)[0], std::exp(-1.0), 1e-16);
}

TEST(Asm, RoundTripAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SynthResult r = synth_pair("p", SynthSpec{32, 48, DepthKind::Radial, 0.5, 2.5, 0.6, 1.0}, seed);
    const Tensor j = invert_asm(r.pair.hazy, r.params);
    EXPECT_LT(max_abs_diff(j, r.pair.clean), 1e-10) << seed;
  }
}

TEST(Asm, InvertRejectsThinTransmission) {
  HazeParams p = params_for(8, 8, 4.0);
  const Tensor i = apply_asm(random_tensor({3, 8, 8}, 2, 0.0, 1.0), p);
  EXPECT_THROW(invert_asm(i, p), NumericError);
  p.beta = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Synth, DepthKinds) {
  const Tensor ramp = synth_depth(5, 3, DepthKind::Ramp, 0);
  EXPECT_EQ(ramp[0], 0.0);
  EXPECT_EQ(ramp[2 * 3 + 1], 0.5);
  EXPECT_EQ(ramp[4 * 3 + 2], 1.0);
  const Tensor radial = synth_depth(9, 9, DepthKind::Radial, 0);
  EXPECT_EQ(radial[4 * 9 + 4], 0.0);
  EXPECT_NEAR(radial[0], 1.0, 1e-15);
  EXPECT_NEAR(radial[80], 1.0, 1e-15);
  const Tensor blocks = synth_depth(8, 8, DepthKind::Blocks, 3);
  EXPECT_EQ(blocks[0], blocks[9]);
  EXPECT_EQ(values(blocks), values(synth_depth(8, 8, DepthKind::Blocks, 3)));
  EXPECT_NE(values(blocks), values(synth_depth(8, 8, DepthKind::Blocks, 4)));
  for (double v : blocks.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (auto k : {DepthKind::Ramp, DepthKind::Radial, DepthKind::Blocks})
    EXPECT_EQ(parse_depth_kind(depth_kind_name(k)), k);
  EXPECT_THROW(parse_depth_kind("fog"), ConfigError);
}

TEST(Synth, PairsAreDeterministicAndInRange) {
  const SynthSpec spec;
  const SynthResult a = synth_pair("a", spec, 9), b = synth_pair("a", spec, 9), c = synth_pair("a", spec, 10);
  EXPECT_EQ(values(a.pair.hazy), values(b.pair.hazy));
  EXPECT_NE(values(a.pair.hazy), values(c.pair.hazy));
  EXPECT_GE(a.params.beta, spec.beta_min);
  EXPECT_LE(a.params.beta, spec.beta_max);
  EXPECT_EQ(a.params.airlight[0], a.params.airlight[2]);
  for (double v : a.pair.clean.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW((SynthSpec{64, 64, DepthKind::Ramp, 2.0, 1.0, 0.6, 1.0}.validate()), ConfigError);
}

std::vector<double> sorted(const Tensor& t) {
  std::vector<double> v = values(t);
  std::sort(v.begin(), v.end());
  return v;
}

TEST(Augment, Permutations) {
  const Tensor x = random_tensor({3, 4, 6}, 11);
  EXPECT_EQ(values(rot90(rot90(rot90(rot90(x, 1), 1), 1), 1)), values(x));
  EXPECT_EQ(rot90(x, 1).shape(), (Shape{3, 6, 4}));
  EXPECT_EQ(values(rot90(x, 2)), values(rot90(rot90(x, 1), 1)));
  EXPECT_EQ(values(rot90(x, -1)), values(rot90(x, 3)));
  EXPECT_EQ(values(hflip(hflip(x))), values(x));
  EXPECT_EQ(sorted(rot90(x, 1)), sorted(x));
  EXPECT_EQ(sorted(hflip(x)), sorted(x));
  // Counter-clockwise: the top-right pixel moves to the top-left.
  EXPECT_EQ(rot90(x, 1)[0], x[5]);
  EXPECT_EQ(hflip(x)[0], x[5]);
}

TEST(Augment, CropFitsLargeImages) {
  const Tensor big({1, 2833, 4657});
  std::mt19937_64 rng(0);
  for (int i = 0; i < 5; ++i) {
    const auto top = std::uniform_int_distribution<std::int64_t>(0, 2833 - 512)(rng);
    const auto left = std::uniform_int_distribution<std::int64_t>(0, 4657 - 512)(rng);
    EXPECT_EQ(crop(big, top, left, 512, 512).shape(), (Shape{1, 512, 512}));
  }
  EXPECT_THROW(crop(big, 2400, 0, 512, 512), ShapeError);
}

TEST(Augment, SameTransformOnBothImages) {
  ImagePair p{"x", random_tensor({3, 20, 24}, 12), Tensor()};
  p.clean = p.hazy;
  const AugmentSpec spec{16, true, true, 0.5};
  for (std::uint64_t s = 0; s < 8; ++s) {
    const ImagePair a = augment(p, spec, s);
    EXPECT_EQ(a.hazy.shape(), (Shape{3, 16, 16}));
    EXPECT_EQ(values(a.hazy), values(a.clean));
    EXPECT_EQ(values(a.hazy), values(augment(p, spec, s).hazy));
  }
  EXPECT_THROW(augment(p, AugmentSpec{32, true, true, 0.5}, 0), ShapeError);
}

TEST(Ppm, ByteMappingAndRoundTrip) {
  TempDir dir("ppm");
  Tensor img({3, 2, 3});
  for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i * 13) / 255.0;
  img[0] = -0.2;
  img[1] = 1.7;
  img[2] = 0.6 / 255.0;
  save_ppm(img, dir.path() / "a.ppm");
  std::ifstream in(dir.path() / "a.ppm", std::ios::binary);
  const std::string raw((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(raw.substr(0, 11), "P6\n3 2\n255\n");
  const auto bytes = raw.substr(11);
  ASSERT_EQ(bytes.size(), 18u);
  // Interleaved RGB: byte 0 is R(0,0), byte 3 is R(0,1), byte 1 is G(0,0).
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[1]), 78);

  const Tensor back = load_ppm(dir.path() / "a.ppm");
  ASSERT_EQ(back.shape(), img.shape());
  for (std::int64_t i = 3; i < img.numel(); ++i) EXPECT_NEAR(back[i], img[i], 1e-15);
  save_ppm(back, dir.path() / "b.ppm");
  EXPECT_EQ(values(load_ppm(dir.path() / "b.ppm")), values(back));
}

void write_raw(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

TEST(Ppm, MalformedFilesRaise) {
  TempDir dir("ppm_bad");
  write_raw(dir.path() / "trunc.ppm", "P6\n2 2\n255\nabc");
  write_raw(dir.path() / "maxval.ppm", "P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06");
  write_raw(dir.path() / "magic.ppm", "P3\n1 1\n255\n1 2 3\n");
  for (const char* f : {"trunc.ppm", "maxval.ppm", "magic.ppm", "missing.ppm"})
    EXPECT_THROW(load_ppm(dir.path() / f), IoError) << f;
  write_raw(dir.path() / "comment.ppm", "P6\n# c\n1 1\n255\n\x0a\x14\x1e");
  EXPECT_NEAR(load_ppm(dir.path() / "comment.ppm")[1], 20.0 / 255.0, 1e-15);
  EXPECT_THROW(save_image(Tensor({3, 2, 2}), dir.path() / "x.png"), IoError);
}

TEST(PairedDirectory, LoadsSortedAndReportsGaps) {
  TempDir dir("paired");
  for (const char* id : {"b", "a"}) {
    save_ppm(random_tensor({3, 4, 4}, 1, 0.0, 1.0), dir.path() / (std::string(id) + "_hazy.ppm"));
    save_ppm(random_tensor({3, 4, 4}, 2, 0.0, 1.0), dir.path() / (std::string(id) + "_gt.ppm"));
  }
  const auto pairs = load_paired_directory(dir.path());
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].id, "a");
  EXPECT_EQ(pairs[1].id, "b");
  save_ppm(random_tensor({3, 4, 4}, 3, 0.0, 1.0), dir.path() / "c_hazy.ppm");
  EXPECT_THROW(load_paired_directory(dir.path()), IoError);
  EXPECT_THROW(load_paired_directory(dir.path() / "nope"), IoError);
}

TEST(Batch, RoundTrip) {
  const Tensor a = random_tensor({3, 4, 4}, 1), b = random_tensor({3, 4, 4}, 2);
  const Tensor batch = to_batch({a, b});
  EXPECT_EQ(batch.shape(), (Shape{2, 3, 4, 4}));
  EXPECT_EQ(values(from_batch(batch, 1)), values(b));
  EXPECT_THROW(to_batch({a, Tensor({3, 4, 5})}), ShapeError);
}

}  // namespace
}  // namespace wfn
