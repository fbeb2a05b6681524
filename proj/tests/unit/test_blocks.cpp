#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wfn/blocks.hpp"

namespace wfn {
namespace {

using test::random_tensor;

BlockConfig config(std::int64_t cin, std::int64_t cout, bool dwt = true, bool parallel = true) {
  BlockConfig bc;
  bc.in_channels = cin;
  bc.out_channels = cout;
  bc.attention = AttentionConfig{2, 0, 2, false, false};
  bc.mlp_ratio = 4;
  bc.use_dwt = dwt;
  bc.use_parallel_conv = parallel;
  return bc;
}

// Per-layer parameter arithmetic.
std::int64_t conv(std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + out; }
std::int64_t attention(std::int64_t c) { return 4 * (c * c + c); }
std::int64_t stack(std::int64_t c, std::int64_t r, bool parallel) {
  return 4 * c + attention(c) + (parallel ? conv(c, c, 3) : 0) + conv(c, r * c, 1) + conv(r * c, c, 1);
}

void randomise(ParameterSet& ps, std::uint64_t seed) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps.value(i) = random_tensor(ps.value(i).shape(), seed + i, -0.5, 0.5);
}

TEST(Blocks, WaveletFormerShapesAndCount) {
  for (bool dwt : {true, false})
    for (bool parallel : {true, false}) {
      ParameterSet ps;
      Initializer init(1);
      const auto blk = WaveletFormerBlock::create(ps, "enc", config(3, 8, dwt, parallel), init);
      EXPECT_EQ(blk.parameter_count(), ps.total_elements());
      const std::int64_t expect = (dwt ? 0 : conv(3, 12, 3)) + conv(12, 8, 1) + stack(8, 4, parallel);
      EXPECT_EQ(ps.total_elements(), expect);
      Tape tape;
      BoundParameters b(tape, ps, false);
      EXPECT_EQ(blk.forward(b, tape.constant(random_tensor({2, 3, 8, 8}, 2))).shape(), (Shape{2, 8, 4, 4}));
    }
}

TEST(Blocks, IWaveletFormerShapesAndCount) {
  for (bool dwt : {true, false}) {
    ParameterSet ps;
    Initializer init(3);
    const auto blk = IWaveletFormerBlock::create(ps, "dec", config(8, 4, dwt), init);
    const std::int64_t expect = conv(8, 16, 1) + (dwt ? 0 : conv(16, 4, 3)) + stack(4, 4, true);
    EXPECT_EQ(ps.total_elements(), expect);
    Tape tape;
    BoundParameters b(tape, ps, false);
    EXPECT_EQ(blk.forward(b, tape.constant(random_tensor({1, 8, 4, 4}, 4))).shape(), (Shape{1, 4, 8, 8}));
  }
}

TEST(Blocks, WaveletFormerProjectsStackedSubbands) {
  // With the transformer stack's residual branches zeroed the block reduces
  // to the 1x1 projection of the (LL, LH, HL, HH) stack.
  ParameterSet ps;
  Initializer init(5);
  const auto blk = WaveletFormerBlock::create(ps, "enc", config(2, 4), init);
  randomise(ps, 50);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& n = ps.name(i);
    if (n.find("attn.proj") != std::string::npos || n.find("fc2") != std::string::npos) ps.value(i).fill(0.0);
  }
  const Tensor x = random_tensor({1, 2, 8, 8}, 6);
  Tape tape;
  BoundParameters b(tape, ps, false);
  const Tensor y = blk.forward(b, tape.constant(x)).value();
  const Tensor p = blk.project(b, tape.constant(x)).value();
  EXPECT_LT(max_abs_diff(y, p), 1e-14);

  const SubbandSet s = dwt2d(x, WaveletFamily::Db2);
  const Tensor& w = ps.value(*ps.find("enc.subband_proj.weight"));
  const Tensor& bias = ps.value(*ps.find("enc.subband_proj.bias"));
  const Tensor* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  double err = 0.0;
  for (std::int64_t o = 0; o < 4; ++o)
    for (std::int64_t i = 0; i < 16; ++i) {
      double acc = bias[o];
      for (int band = 0; band < 4; ++band)
        for (std::int64_t c = 0; c < 2; ++c) acc += w[o * 8 + band * 2 + c] * (*bands[band])[c * 16 + i];
      err = std::max(err, std::abs(acc - p[o * 16 + i]));
    }
  EXPECT_LT(err, 1e-13);
}

TEST(Blocks, ParallelConvGatesAttention) {
  // Zeroing the parallel conv kills the gated attention residual, so the
  // full block equals the no-parallel block with its attention output zeroed.
  ParameterSet ps;
  Initializer init(7);
  const auto blk = WaveletFormerBlock::create(ps, "enc", config(2, 4), init);
  randomise(ps, 70);
  const Tensor x = random_tensor({1, 2, 8, 8}, 8);
  Tape t1;
  BoundParameters b1(t1, ps, false);
  const Tensor before = blk.forward(b1, t1.constant(x)).value();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.name(i).find("parallel_conv") != std::string::npos) ps.value(i).fill(0.0);
  Tape t2;
  BoundParameters b2(t2, ps, false);
  const Tensor gated_off = blk.forward(b2, t2.constant(x)).value();
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.name(i).find("attn.") != std::string::npos) ps.value(i).fill(0.0);
  Tape t3;
  BoundParameters b3(t3, ps, false);
  EXPECT_GT(max_abs_diff(before, gated_off), 1e-6);
  EXPECT_LT(max_abs_diff(gated_off, blk.forward(b3, t3.constant(x)).value()), 1e-14);
}

TEST(Blocks, FeatureAggregationFormula) {
  ParameterSet ps;
  Initializer init(9);
  const auto fam = FeatureAggregation::create(ps, "fam", 4, AttentionConfig{2, 0, 2, false, false}, init);
  randomise(ps, 90);
  EXPECT_EQ(ps.total_elements(), attention(4));
  const Tensor fo = random_tensor({1, 4, 4, 4}, 10), fi = random_tensor({1, 4, 4, 4}, 11);
  Tape tape;
  BoundParameters b(tape, ps, false);
  const Tensor y = fam.attention_map(b, tape.constant(fo), tape.constant(fi)).value();
  const Tensor out = fam.forward(b, tape.constant(fo), tape.constant(fi)).value();
  double err = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const double expect = fi[i] / (1.0 + std::exp(-y[i])) + fo[i];
    err = std::max(err, std::abs(expect - out[i]));
  }
  EXPECT_LT(err, 1e-14);
}

TEST(Blocks, AsppBranchesAndCount) {
  ParameterSet ps;
  Initializer init(12);
  const auto aspp = AsppBlock::create(ps, "aspp", 4, 6, init);
  EXPECT_EQ(ps.total_elements(), 3 * conv(4, 4, 3) + conv(12, 6, 1));
  const std::int64_t rates[3] = {3, 6, 9};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(aspp.branch(i).spec.dilation, rates[i]);
    EXPECT_EQ(aspp.branch(i).spec.padding, rates[i]);
  }
  Tape tape;
  BoundParameters b(tape, ps, false);
  EXPECT_EQ(aspp.forward(b, tape.constant(random_tensor({1, 4, 6, 6}, 13))).shape(), (Shape{1, 6, 6, 6}));
}

TEST(Blocks, MacsScaleWithArea) {
  ParameterSet ps;
  Initializer init(14);
  const auto enc = WaveletFormerBlock::create(ps, "enc", config(4, 8), init);
  EXPECT_EQ(enc.macs(16, 16) * 4, enc.macs(32, 32));
  EXPECT_GT(enc.macs(16, 16), 0);
}

TEST(Blocks, OddInputRejected) {
  ParameterSet ps;
  Initializer init(15);
  const auto enc = WaveletFormerBlock::create(ps, "enc", config(2, 4), init);
  Tape tape;
  BoundParameters b(tape, ps, false);
  EXPECT_THROW(enc.forward(b, tape.constant(random_tensor({1, 2, 6, 7}, 16))), ShapeError);
}

}  // namespace
}  // namespace wfn
