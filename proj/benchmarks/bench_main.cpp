#include <benchmark/benchmark.h>

#include <random>

#include "wfn/loss.hpp"
#include "wfn/network.hpp"
#include "wfn/optim.hpp"

namespace {

using namespace wfn;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

NetworkConfig toy() {
  NetworkConfig c;
  c.stages = 2;
  c.base_channels = 8;
  c.attention.window = 4;
  return c;
}

void BM_Conv2d(benchmark::State& state) {
  const std::int64_t c = state.range(0), n = state.range(1);
  const Tensor x = random_tensor({1, c, n, n}, 1), w = random_tensor({c, c, 3, 3}, 2);
  const ConvSpec spec{c, c, 3, 1, 1, 1, false};
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(ops::conv2d(tape.constant(x), tape.constant(w), std::nullopt, spec).value());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 9 * n * n);
}
BENCHMARK(BM_Conv2d)->Args({8, 64})->Args({16, 64})->Args({32, 32});

void BM_Dwt2d(benchmark::State& state) {
  const auto family = static_cast<WaveletFamily>(state.range(0));
  const Tensor x = random_tensor({1, 3, 256, 256}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dwt2d(x, family).ll);
  state.SetLabel(std::string(wavelet_name(family)));
}
BENCHMARK(BM_Dwt2d)->DenseRange(0, 2);

void BM_WindowAttention(benchmark::State& state) {
  const std::int64_t c = 16, n = state.range(0);
  const AttentionConfig cfg{2, 8, 4, state.range(1) != 0, true};
  std::mt19937_64 rng(4);
  Tape tape;
  AttentionWeights w;
  auto lin = [&](std::uint64_t s) { return tape.constant(random_tensor({c, c}, s)); };
  w.q_w = lin(5), w.k_w = lin(6), w.v_w = lin(7), w.o_w = lin(8);
  w.q_b = w.k_b = w.v_b = w.o_b = tape.constant(Tensor({c}));
  w.bias_table = tape.constant(random_tensor({49, 2}, 9));
  const Var x = tape.constant(random_tensor({1, c, n, n}, 10));
  for (auto _ : state) benchmark::DoNotOptimize(window_mhsa_image(x, cfg, w).value());
}
BENCHMARK(BM_WindowAttention)->Args({32, 0})->Args({32, 1})->Args({64, 1});

void BM_NetworkForward(benchmark::State& state) {
  const Model m = Model::build(toy(), 0);
  const std::int64_t n = state.range(0);
  const Tensor x = random_tensor({1, 3, n, n}, 11);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x));
  state.counters["MACs"] = static_cast<double>(m.flop_count(n, n));
}
BENCHMARK(BM_NetworkForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Model m = Model::build(toy(), 0);
  const FeatureExtractor fe = FeatureExtractor::create();
  const Tensor x = random_tensor({1, 3, 64, 64}, 12), y = random_tensor({1, 3, 64, 64}, 13);
  AdamState adam = AdamState::for_parameters(m.parameters());
  for (auto _ : state) {
    Tape tape;
    BoundParameters b(tape, m.parameters());
    const LossTerms loss = total_loss(m.forward(b, tape.constant(x)), tape.constant(y), LossWeights{}, fe, 3);
    tape.backward(loss.total);
    std::vector<Tensor> g = b.gradients();
    clip_grad_norm(g, 1.0);
    adam_step(m.parameters(), g, adam, 1e-4);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
