#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "test_util.hpp"
#include "wfn/optim.hpp"

namespace wfn {
namespace {

using test::random_tensor;
using test::TempDir;

ParameterSet two_params() {
  ParameterSet ps;
  ps.add("a", random_tensor({3, 4}, 1));
  ps.add("b", random_tensor({5}, 2));
  return ps;
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  const ScheduleSpec s{1e-4, 1000};
  EXPECT_EQ(cosine_lr(0, s), 1e-4);
  EXPECT_EQ(cosine_lr(1000, s), 0.0);
  EXPECT_NEAR(cosine_lr(500, s), 5e-5, 1e-20);
  for (std::int64_t t : {1, 123, 777}) {
    EXPECT_NEAR(cosine_lr(t, s), 0.5e-4 * (1.0 + std::cos(std::numbers::pi * t / 1000.0)), 1e-19);
    EXPECT_LT(cosine_lr(t + 1, s), cosine_lr(t, s));
  }
  EXPECT_THROW(cosine_lr(-1, s), ConfigError);
  EXPECT_THROW(cosine_lr(1001, s), ConfigError);
  EXPECT_THROW(cosine_lr(0, ScheduleSpec{1e-4, 0}), ConfigError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterSet ps = two_params();
  const ParameterSet before = ps;
  AdamState st = AdamState::for_parameters(ps);
  EXPECT_EQ(st.beta1, 0.9);
  EXPECT_EQ(st.beta2, 0.999);
  std::vector<Tensor> g{Tensor({3, 4}), Tensor({5})};
  adam_step(ps, g, st, 1e-3);
  EXPECT_EQ(values(ps.value(0)), values(before.value(0)));
  EXPECT_EQ(values(ps.value(1)), values(before.value(1)));
  EXPECT_EQ(sum_squares(st.m[0]), 0.0);
  EXPECT_EQ(sum_squares(st.v[1]), 0.0);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  ParameterSet ps = two_params();
  const ParameterSet before = ps;
  AdamState st = AdamState::for_parameters(ps);
  const std::vector<Tensor> g{random_tensor({3, 4}, 3), random_tensor({5}, 4)};
  const double lr = 1e-3;
  adam_step(ps, g, st, lr);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::int64_t i = 0; i < g[k].numel(); ++i) {
      const double step = ps.value(k)[i] - before.value(k)[i];
      EXPECT_NEAR(step, -lr * (g[k][i] > 0 ? 1.0 : -1.0), lr * 1e-6);
    }
}

TEST(Adam, PositiveScalingKeepsDirection) {
  const std::vector<Tensor> g{random_tensor({3, 4}, 5), random_tensor({5}, 6)};
  for (double scale : {1e-3, 1.0, 250.0}) {
    ParameterSet a = two_params(), b = two_params();
    AdamState sa = AdamState::for_parameters(a), sb = AdamState::for_parameters(b);
    std::vector<Tensor> gs = g;
    for (auto& t : gs)
      for (double& v : t.data()) v *= scale;
    adam_step(a, g, sa, 1e-3);
    adam_step(b, gs, sb, 1e-3);
    const ParameterSet ref = two_params();
    for (std::size_t k = 0; k < 2; ++k)
      for (std::int64_t i = 0; i < g[k].numel(); ++i) {
        EXPECT_EQ(std::signbit(a.value(k)[i] - ref.value(k)[i]), std::signbit(b.value(k)[i] - ref.value(k)[i]));
      }
  }
}

TEST(Adam, MatchesReferenceOverSeveralSteps) {
  ParameterSet ps;
  ps.add("x", Tensor({1}, 0.5));
  AdamState st = AdamState::for_parameters(ps);
  double x = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * x - 0.3 * t;
    adam_step(ps, {Tensor({1}, g)}, st, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(ps.value(0)[0], x, 1e-15);
  }
}

TEST(Adam, RejectsNonFiniteAndMismatchedGradients) {
  ParameterSet ps = two_params();
  const ParameterSet before = ps;
  AdamState st = AdamState::for_parameters(ps);
  std::vector<Tensor> g{Tensor({3, 4}, 0.1), Tensor({5}, 0.1)};
  g[1][2] = std::nan("");
  EXPECT_THROW(adam_step(ps, g, st, 1e-3), NumericError);
  EXPECT_EQ(values(ps.value(0)), values(before.value(0)));
  EXPECT_EQ(st.t, 0);
  EXPECT_THROW(adam_step(ps, {Tensor({3, 4})}, st, 1e-3), ShapeError);
  EXPECT_THROW(adam_step(ps, {Tensor({4, 3}), Tensor({5})}, st, 1e-3), ShapeError);
}

TEST(Clip, GlobalNorm) {
  std::vector<Tensor> g{Tensor({2}, 3.0), Tensor({1}, 4.0)};
  EXPECT_DOUBLE_EQ(global_norm(g), std::sqrt(34.0));
  const double before = clip_grad_norm(g, 1.0);
  EXPECT_DOUBLE_EQ(before, std::sqrt(34.0));
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g[0][0] / g[1][0], 0.75, 1e-15);
  std::vector<Tensor> small{Tensor({2}, 0.1)};
  clip_grad_norm(small, 1.0);
  EXPECT_EQ(small[0][0], 0.1);
}

NetworkConfig toy_network() {
  NetworkConfig c;
  c.stages = 2;
  c.base_channels = 8;
  c.attention.window = 4;
  return c;
}

std::vector<ImagePair> toy_pair(std::int64_t size) {
  HazeParams hp;
  hp.airlight = {0.8, 0.8, 0.8};
  hp.beta = 1.0;
  hp.depth = synth_depth(size, size, DepthKind::Ramp, 0);
  return {synth_pair("toy", hp, 7)};
}

TrainConfig toy_train(std::int64_t steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.seed = 3;
  tc.augment = false;
  return tc;
}

TEST(Fit, ZeroStepsLeavesModelUnchanged) {
  Model m = Model::build(toy_network(), 1);
  const Model ref = Model::build(toy_network(), 1);
  const TrainState st = fit(m, toy_pair(32), toy_train(0));
  EXPECT_TRUE(st.history.empty());
  for (std::size_t i = 0; i < ref.parameters().size(); ++i)
    EXPECT_EQ(values(m.parameters().value(i)), values(ref.parameters().value(i)));
}

TEST(Fit, DeterministicAndLogged) {
  TempDir dir("fit");
  TrainConfig tc = toy_train(6);
  tc.augment = true;
  tc.augment_spec.patch = 32;
  tc.checkpoint_every = 4;
  tc.out_dir = dir.path();
  Model a = Model::build(toy_network(), 2), b = Model::build(toy_network(), 2);
  const TrainState sa = fit(a, toy_pair(48), tc);
  tc.out_dir.clear();
  const TrainState sb = fit(b, toy_pair(48), tc);
  ASSERT_EQ(sa.history.size(), 6u);
  for (std::size_t i = 0; i < sa.history.size(); ++i) {
    EXPECT_EQ(sa.history[i].loss, sb.history[i].loss);
    EXPECT_EQ(sa.history[i].lr, cosine_lr(static_cast<std::int64_t>(i), {tc.lr0, tc.steps}));
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ckpt_4.wfn"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ckpt_6.wfn"));
  std::ifstream log(dir.path() / "metrics.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    EXPECT_EQ(line.rfind("step=", 0), 0u);
    ++lines;
  }
  EXPECT_EQ(lines, 6);
}

TEST(Fit, RejectsBadConfig) {
  Model m = Model::build(toy_network(), 1);
  EXPECT_THROW(fit(m, {}, toy_train(1)), ConfigError);
  TrainConfig tc = toy_train(1);
  tc.augment = true;
  tc.augment_spec.patch = 24;
  EXPECT_THROW(fit(m, toy_pair(32), tc), ShapeError);
}

// Means over consecutive 50-step blocks of a 500-step run must fall strictly.
TEST(Fit, ToyRunSmoothedLossDecreases) {
  Model m = Model::build(toy_network(), 0);
  const TrainState st = fit(m, toy_pair(64), toy_train(500));
  ASSERT_EQ(st.history.size(), 500u);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < 10; ++b) {
    double mean = 0.0;
    for (std::size_t i = 50 * b; i < 50 * (b + 1); ++i) mean += st.history[i].loss / 50.0;
    EXPECT_LT(mean, prev) << "block " << b;
    prev = mean;
  }
}

}  // namespace
}  // namespace wfn
