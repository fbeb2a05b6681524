#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wfn/grad_check.hpp"
#include "wfn/ops.hpp"

namespace wfn {
namespace {

using test::random_tensor;

TEST(Tensor, ShapeAndBufferAgree) {
  Tensor t(Shape{2, 3, 4}, 1.5);
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.dim(-1), 4);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
}

TEST(Tensor, NonFiniteResultsRaise) {
  Tape tape;
  const Var a = tape.variable(Tensor(Shape{2}, 1.0));
  const Var z = tape.constant(Tensor(Shape{2}, 0.0));
  EXPECT_THROW(ops::div(a, z), NumericError);
  EXPECT_THROW(tape.constant(Tensor(Shape{1}, std::nan(""))), NumericError);
}

TEST(Conv2d, IdentityKernel) {
  Tape tape;
  const Tensor x = random_tensor({1, 1, 3, 3}, 1);
  const Var y = ops::conv2d(tape.constant(x), tape.constant(Tensor(Shape{1, 1, 1, 1}, 1.0)), std::nullopt,
                            ConvSpec{1, 1, 1, 1, 1, 0, false});
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, OnesKernelCentreIsNine) {
  Tape tape;
  const Var y = ops::conv2d(tape.constant(Tensor(Shape{1, 1, 5, 5}, 1.0)), tape.constant(Tensor(Shape{1, 1, 3, 3}, 1.0)),
                            std::nullopt, ConvSpec{1, 1, 3, 1, 1, 1, false});
  EXPECT_DOUBLE_EQ(y.value().at(0, 0, 2, 2), 9.0);
  EXPECT_DOUBLE_EQ(y.value().at(0, 0, 0, 0), 4.0);
}

TEST(Conv2d, DilatedReceptiveField) {
  const ConvSpec spec{1, 1, 3, 1, 2, 0, false};
  EXPECT_EQ(spec.receptive_field(), 5);
  EXPECT_EQ(spec.output_extent(5), 1);
  EXPECT_THROW(spec.output_extent(4), ShapeError);
  Tape tape;
  const Var y = ops::conv2d(tape.constant(Tensor(Shape{1, 1, 5, 5}, 1.0)), tape.constant(Tensor(Shape{1, 1, 3, 3}, 1.0)),
                            std::nullopt, spec);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
}

TEST(Conv2d, RejectsInvalidSpecsAndShapes) {
  EXPECT_THROW((ConvSpec{1, 1, 2, 1, 1, 0, false}.validate()), Error);
  Tape tape;
  EXPECT_THROW(ops::conv2d(tape.constant(Tensor(Shape{1, 2, 5, 5})), tape.constant(Tensor(Shape{1, 1, 3, 3})),
                           std::nullopt, ConvSpec{1, 1, 3, 1, 1, 1, false}),
               ShapeError);
}

TEST(Conv2d, MatchesDirectSumOracle) {
  const Tensor x = random_tensor({2, 3, 7, 6}, 2), w = random_tensor({4, 3, 3, 3}, 3), b = random_tensor({4}, 4);
  const ConvSpec spec{3, 4, 3, 2, 2, 2, true};
  Tape tape;
  const Tensor y = ops::conv2d(tape.constant(x), tape.constant(w), tape.constant(b), spec).value();
  const std::int64_t ho = spec.output_extent(7), wo = spec.output_extent(6);
  ASSERT_EQ(y.shape(), (Shape{2, 4, ho, wo}));
  double err = 0.0;
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t o = 0; o < 4; ++o)
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) {
          double s = b[o];
          for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t ki = 0; ki < 3; ++ki)
              for (std::int64_t kj = 0; kj < 3; ++kj) {
                const std::int64_t yi = i * 2 + ki * 2 - 2, xj = j * 2 + kj * 2 - 2;
                if (yi < 0 || yi >= 7 || xj < 0 || xj >= 6) continue;
                s += w.at(o, c, ki, kj) * x.at(n, c, yi, xj);
              }
          err = std::max(err, std::abs(s - y.at(n, o, i, j)));
        }
  EXPECT_LT(err, 1e-12);
}

TEST(Conv2d, LinearInInput) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x1 = random_tensor({1, 2, 6, 6}, seed), x2 = random_tensor({1, 2, 6, 6}, seed + 10);
    const Tensor w = random_tensor({3, 2, 3, 3}, seed + 20);
    const double a = 0.7, b = -1.3;
    Tensor mix(x1.shape());
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * x1[i] + b * x2[i];
    Tape tape;
    const ConvSpec spec{2, 3, 3, 1, 1, 1, false};
    auto conv = [&](const Tensor& x) { return ops::conv2d(tape.constant(x), tape.constant(w), std::nullopt, spec).value(); };
    const Tensor lhs = conv(mix), y1 = conv(x1), y2 = conv(x2);
    double err = 0.0;
    for (std::int64_t i = 0; i < lhs.numel(); ++i) err = std::max(err, std::abs(lhs[i] - (a * y1[i] + b * y2[i])));
    EXPECT_LT(err, 1e-10);
  }
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  // <conv(x), y> = <x, conv_transpose(y)> for a shared kernel.
  const ConvSpec fwd{2, 3, 3, 2, 1, 1, false};
  const Tensor x = random_tensor({1, 2, 8, 8}, 5), wt = random_tensor({3, 2, 3, 3}, 6);
  Tape tape;
  const Tensor cx = ops::conv2d(tape.constant(x), tape.constant(wt), std::nullopt, fwd).value();
  const Tensor y = random_tensor(cx.shape(), 7);
  // conv_transpose weights are [Cin, Cout, k, k] with Cin the channels of y.
  const Tensor cty = ops::conv_transpose2d(tape.constant(y), tape.constant(wt), std::nullopt,
                                           ConvSpec{3, 2, 3, 2, 1, 1, false}, 1)
                         .value();
  ASSERT_EQ(cty.shape(), x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::int64_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
  for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * cty[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Softmax, ClosedForms) {
  Tape tape;
  const Tensor a = ops::softmax(tape.constant(Tensor(Shape{2}, std::vector<double>{0.0, 0.0})), 0).value();
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  const Tensor b = ops::softmax(tape.constant(Tensor(Shape{2}, std::vector<double>{0.0, std::log(3.0)})), 0).value();
  EXPECT_NEAR(b[0], 0.25, 1e-15);
  EXPECT_NEAR(b[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalised) {
  Tape tape;
  const Tensor x = random_tensor({4, 9}, 8, -20.0, 20.0);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 123.0;
  const Tensor p = ops::softmax(tape.constant(x), 1).value();
  const Tensor q = ops::softmax(tape.constant(shifted), 1).value();
  EXPECT_LT(max_abs_diff(p, q), 1e-12);
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 9; ++c) {
      EXPECT_GT(p[r * 9 + c], 0.0);
      s += p[r * 9 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Along axis 0 as well.
  const Tensor p0 = ops::softmax(tape.constant(x), 0).value();
  for (int c = 0; c < 9; ++c) {
    double s = 0.0;
    for (int r = 0; r < 4; ++r) s += p0[r * 9 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(LayerNorm, ClosedForms) {
  Tape tape;
  const Var g1 = tape.constant(Tensor(Shape{2}, 1.0)), b0 = tape.constant(Tensor(Shape{2}, 0.0));
  const Tensor c = ops::layer_norm(tape.constant(Tensor(Shape{3, 2}, 4.0)), g1, b0, 1).value();
  for (double v : values(c)) EXPECT_EQ(v, 0.0);
  const Tensor d =
      ops::layer_norm(tape.constant(Tensor(Shape{1, 2}, std::vector<double>{1.0, 3.0})), g1, b0, 1, 1e-14).value();
  EXPECT_NEAR(d[0], -1.0, 1e-12);
  EXPECT_NEAR(d[1], 1.0, 1e-12);
  const Tensor e = ops::layer_norm(tape.constant(random_tensor({2, 2}, 9)), tape.constant(Tensor(Shape{2}, 0.0)),
                                   tape.constant(Tensor(Shape{2}, 0.25)), 1)
                       .value();
  for (double v : values(e)) EXPECT_EQ(v, 0.25);
}

TEST(LayerNorm, ChannelAxisOfImages) {
  Tape tape;
  const Tensor x = random_tensor({2, 5, 3, 3}, 10, -3.0, 3.0);
  const Tensor y = ops::layer_norm(tape.constant(x), tape.constant(Tensor(Shape{5}, 1.0)),
                                   tape.constant(Tensor(Shape{5}, 0.0)), 1, 0.0)
                       .value();
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t p = 0; p < 9; ++p) {
      double m = 0.0, v = 0.0;
      for (std::int64_t c = 0; c < 5; ++c) m += y[(n * 5 + c) * 9 + p];
      m /= 5.0;
      for (std::int64_t c = 0; c < 5; ++c) v += (y[(n * 5 + c) * 9 + p] - m) * (y[(n * 5 + c) * 9 + p] - m);
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v / 5.0, 1.0, 1e-12);
    }
}

TEST(GradCheck, SquareAtThree) {
  Tape tape;
  const Var x = tape.variable(Tensor(Shape{1}, 3.0));
  tape.backward(ops::sum(ops::square(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
  const double h = 1e-5;
  const double fd = ((3.0 + h) * (3.0 + h) - (3.0 - h) * (3.0 - h)) / (2 * h);
  EXPECT_NEAR(fd, 6.0, 1e-6);
  const GradCheckReport r = grad_check(
      [](Tape&, std::span<const Var> v) { return ops::square(v[0]); }, {Tensor(Shape{1}, 3.0)});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(GradCheck, DetectsWrongAdjoint) {
  // An op whose recorded adjoint is deliberately doubled must fail.
  const Differentiable broken = [](Tape& tape, std::span<const Var> v) {
    Var x = v[0];
    Tensor y = x.value();
    for (double& e : y.data()) e *= e;
    return tape.record("bad_square", std::move(y), {x}, [x](Tape& t, std::uint32_t self) {
      const Tensor& g = t.grad(self);
      auto gx = t.grad_buffer(x.id);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[static_cast<std::size_t>(i)] += 4.0 * x.value()[i] * g[i];
    });
  };
  const GradCheckReport r = grad_check(broken, {random_tensor({5}, 11)});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 0.1);
}

TEST(GradCheck, ConvAndSoftmaxAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GradCheckOptions opt;
    opt.seed = seed;
    const GradCheckReport conv = grad_check(
        [](Tape&, std::span<const Var> v) { return ops::conv2d(v[0], v[1], std::nullopt, ConvSpec{2, 2, 3, 1, 1, 1, false}); },
        {random_tensor({1, 2, 6, 6}, seed), random_tensor({2, 2, 3, 3}, seed + 100)}, opt);
    EXPECT_LT(conv.max_error, 1e-4) << "seed " << seed;
    const GradCheckReport sm =
        grad_check([](Tape&, std::span<const Var> v) { return ops::softmax(v[0], 0); }, {random_tensor({8}, seed)}, opt);
    EXPECT_LT(sm.max_error, 1e-4) << "seed " << seed;
  }
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
  Tape tape;
  const Var x = tape.variable(Tensor(Shape{3}, std::vector<double>{1.0, 2.0, 3.0}));
  tape.backward(ops::sum(ops::add(ops::mul(x, x), x)));
  const Tensor& g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[2], 7.0);
}

}  // namespace
}  // namespace wfn
