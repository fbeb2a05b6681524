#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wfn/attention.hpp"
#include "wfn/blocks.hpp"

namespace wfn {
namespace {

using test::random_tensor;

TEST(Windows, PartitionLayoutAndMergeRoundTrip) {
  const Tensor x = random_tensor({2, 3, 4, 6}, 1);
  Tape tape;
  const Tensor t = window_partition(tape.constant(x), 2).value();
  ASSERT_EQ(t.shape(), (Shape{2 * 2 * 3, 4, 3}));
  // Window (n=1, row=1, col=2), token (1,0), channel 2.
  const std::int64_t win = (1 * 2 + 1) * 3 + 2, tok = 1 * 2 + 0;
  EXPECT_EQ(t[(win * 4 + tok) * 3 + 2], x.at(1, 2, 1 * 2 + 1, 2 * 2 + 0));
  const Tensor back = window_merge(tape.constant(t), 2, 2, 4, 6).value();
  EXPECT_EQ(back, x);
  EXPECT_THROW(window_partition(tape.constant(x), 4), ShapeError);
}

/// softmax(q k^T / sqrt(d) + bias) v per head, by direct loops.
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const Tensor* bias) {
  const std::int64_t B = q.dim(0), Tq = q.dim(1), Tk = k.dim(1), C = q.dim(2), d = C / heads;
  Tensor out(Shape{B, Tq, C});
  for (std::int64_t b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      for (std::int64_t i = 0; i < Tq; ++i) {
        std::vector<double> s(static_cast<std::size_t>(Tk));
        double mx = -1e300;
        for (std::int64_t j = 0; j < Tk; ++j) {
          double dot = 0.0;
          for (std::int64_t c = 0; c < d; ++c) dot += q[(b * Tq + i) * C + h * d + c] * k[(b * Tk + j) * C + h * d + c];
          s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(d)) + (bias ? (*bias)[(h * Tq + i) * Tk + j] : 0.0);
          mx = std::max(mx, s[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (std::int64_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < Tk; ++j) acc += s[static_cast<std::size_t>(j)] / z * v[(b * Tk + j) * C + h * d + c];
          out[(b * Tq + i) * C + h * d + c] = acc;
        }
      }
  return out;
}

TEST(Attention, MatchesDirectComputation) {
  const Tensor q = random_tensor({3, 4, 6}, 2), k = random_tensor({3, 5, 6}, 3), v = random_tensor({3, 5, 6}, 4);
  const Tensor bias = random_tensor({2, 4, 5}, 5);
  Tape tape;
  const Tensor got = scaled_dot_attention(tape.constant(q), tape.constant(k), tape.constant(v), 2, tape.constant(bias)).value();
  EXPECT_LT(max_abs_diff(got, naive_attention(q, k, v, 2, &bias)), 1e-13);
}

TEST(Attention, ProbabilitiesAreRowStochastic) {
  const Tensor p = attention_probabilities(random_tensor({2, 4, 4}, 6, -5, 5), random_tensor({2, 7, 4}, 7, -5, 5), 2);
  ASSERT_EQ(p.shape(), (Shape{2, 2, 4, 7}));
  for (std::int64_t r = 0; r < 2 * 2 * 4; ++r) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 7; ++j) s += p[r * 7 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

AttentionWeights random_weights(Tape& tape, std::int64_t c, std::uint64_t seed, std::optional<Shape> table = {}) {
  AttentionWeights w{tape.constant(random_tensor({c, c}, seed)),     tape.constant(random_tensor({c}, seed + 1)),
                     tape.constant(random_tensor({c, c}, seed + 2)), tape.constant(random_tensor({c}, seed + 3)),
                     tape.constant(random_tensor({c, c}, seed + 4)), tape.constant(random_tensor({c}, seed + 5)),
                     tape.constant(random_tensor({c, c}, seed + 6)), tape.constant(random_tensor({c}, seed + 7)),
                     std::nullopt};
  if (table) w.bias_table = tape.constant(random_tensor(*table, seed + 8));
  return w;
}

TEST(Attention, SelfAttentionEqualsCrossAttentionWithItself) {
  Tape tape;
  const AttentionConfig cfg{2, 2, 2, false, false};
  const AttentionWeights w = random_weights(tape, 4, 10);
  const Var x = tape.constant(random_tensor({1, 4, 4, 4}, 11));
  EXPECT_EQ(window_mhsa_image(x, cfg, w).value(), mhca(x, x, cfg, w).value());
}

TEST(Attention, WindowsDoNotInteractWithoutShift) {
  // Perturbing one window leaves the other windows' outputs unchanged.
  Tape tape;
  const AttentionConfig cfg{1, 4, 2, false, false};
  const AttentionWeights w = random_weights(tape, 4, 20);
  Tensor x = random_tensor({1, 4, 4, 4}, 21);
  const Tensor y0 = window_mhsa_image(tape.constant(x), cfg, w).value();
  x.at(0, 1, 0, 0) += 1.0;  // top-left window
  const Tensor y1 = window_mhsa_image(tape.constant(x), cfg, w).value();
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 4; ++j) {
        if (i < 2 && j < 2) continue;
        EXPECT_EQ(y0.at(0, c, i, j), y1.at(0, c, i, j));
      }
}

TEST(Attention, ShiftedWindowsMixAcrossBoundaries) {
  Tape tape;
  const AttentionConfig cfg{1, 4, 2, true, false};
  const AttentionWeights w = random_weights(tape, 4, 30);
  Tensor x = random_tensor({1, 4, 4, 4}, 31);
  const Tensor y0 = window_mhsa_image(tape.constant(x), cfg, w).value();
  x.at(0, 0, 1, 1) += 1.0;
  const Tensor y1 = window_mhsa_image(tape.constant(x), cfg, w).value();
  // (1,2) shares a shifted window with (1,1) but not an unshifted one.
  double diff = 0.0;
  for (std::int64_t c = 0; c < 4; ++c) diff += std::abs(y0.at(0, c, 1, 2) - y1.at(0, c, 1, 2));
  EXPECT_GT(diff, 1e-8);
}

TEST(Attention, ShiftedMaskSeparatesRegions) {
  const Tensor m = shifted_window_mask(8, 8, 4);
  ASSERT_EQ(m.shape(), (Shape{4, 16, 16}));
  for (double v : m.data()) EXPECT_TRUE(v == 0.0 || v == -100.0);
  // The top-left window holds a single region.
  for (std::int64_t i = 0; i < 256; ++i) EXPECT_EQ(m[i], 0.0);
  // The bottom-right window mixes four regions.
  std::int64_t blocked = 0;
  for (std::int64_t i = 0; i < 256; ++i) blocked += m[3 * 256 + i] != 0.0;
  EXPECT_EQ(blocked, 256 - 4 * 16);
}

TEST(Attention, RelativePositionIndexRange) {
  const auto idx = relative_position_index(3);
  ASSERT_EQ(idx.size(), 81u);
  for (auto i : idx) {
    EXPECT_GE(i, 0);
    EXPECT_LT(i, 25);
  }
  // Diagonal (zero offset) maps to the table centre.
  for (int t = 0; t < 9; ++t) EXPECT_EQ(idx[static_cast<std::size_t>(t * 9 + t)], 12);
}

TEST(Attention, ConfigValidation) {
  EXPECT_THROW((AttentionConfig{0, 4, 4, false, false}.validate()), ConfigError);
  Tape tape;
  const AttentionWeights w = random_weights(tape, 4, 40);
  EXPECT_THROW(mhca(tape.constant(random_tensor({1, 4, 6, 6}, 41)), tape.constant(random_tensor({1, 4, 6, 6}, 42)),
                    AttentionConfig{2, 2, 4, false, false}, w),
               ShapeError);
}

}  // namespace
}  // namespace wfn
