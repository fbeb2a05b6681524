#include "wfn/verify.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>

#include "wfn/attention.hpp"
#include "wfn/blocks.hpp"
#include "wfn/data.hpp"
#include "wfn/loss.hpp"
#include "wfn/metrics.hpp"
#include "wfn/network.hpp"
#include "wfn/wavelet.hpp"

namespace wfn {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

CheckResult make_check(std::string suite, std::string name, double error, double tol) {
  return {std::move(suite), std::move(name), error, tol, error < tol};
}

/// Wraps a plain op: every input is data drawn from U(lo, hi).
GradCase op_case(std::string name, std::vector<Shape> shapes, Differentiable fn, double lo = -1.0, double hi = 1.0) {
  GradCase c;
  c.name = std::move(name);
  c.fn = std::move(fn);
  c.inputs = [shapes, lo, hi](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> out;
    for (const auto& s : shapes) out.push_back(random_tensor(s, rng, lo, hi));
    return out;
  };
  return c;
}

using LayerForward = std::function<Var(const BoundParameters&, std::span<const Var>)>;

/// Wraps a layer: data inputs first, then every parameter of `params`,
/// re-drawn from U(-0.5, 0.5) so that zero-initialised weights are exercised.
GradCase layer_case(std::string name, std::vector<Shape> data_shapes, std::shared_ptr<const ParameterSet> params,
                    LayerForward forward, std::int64_t max_elements = 6) {
  GradCase c;
  c.name = std::move(name);
  c.max_elements_per_input = max_elements;
  const std::size_t nd = data_shapes.size();
  c.fn = [nd, forward](Tape& tape, std::span<const Var> in) {
    BoundParameters b(tape, std::vector<Var>(in.begin() + static_cast<std::ptrdiff_t>(nd), in.end()));
    return forward(b, in.subspan(0, nd));
  };
  c.inputs = [data_shapes, params](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> out;
    for (const auto& s : data_shapes) out.push_back(random_tensor(s, rng));
    for (std::size_t i = 0; i < params->size(); ++i) out.push_back(random_tensor(params->value(i).shape(), rng, -0.5, 0.5));
    return out;
  };
  return c;
}

BlockConfig tiny_block(std::int64_t cin, std::int64_t cout, bool use_dwt, bool parallel, bool shifted = false) {
  BlockConfig bc;
  bc.in_channels = cin;
  bc.out_channels = cout;
  bc.attention = AttentionConfig{2, 0, 2, shifted, shifted};
  bc.wavelet = WaveletFamily::Db2;
  bc.mlp_ratio = 2;
  bc.use_dwt = use_dwt;
  bc.use_parallel_conv = parallel;
  return bc;
}

}  // namespace

std::string format_check(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-8s %-44s max_err=%.3e tol=%.1e", r.passed ? "PASS" : "FAIL", r.suite.c_str(),
                r.name.c_str(), r.error, r.tolerance);
  return buf;
}

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;

  cases.push_back(op_case("conv2d k3 p1", {{1, 2, 6, 6}, {3, 2, 3, 3}, {3}}, [](Tape&, std::span<const Var> v) {
    return ops::conv2d(v[0], v[1], v[2], ConvSpec{2, 3, 3, 1, 1, 1, true});
  }));
  cases.push_back(op_case("conv2d k3 s2 r2 p2", {{1, 2, 7, 7}, {2, 2, 3, 3}}, [](Tape&, std::span<const Var> v) {
    return ops::conv2d(v[0], v[1], std::nullopt, ConvSpec{2, 2, 3, 2, 2, 2, false});
  }));
  cases.push_back(op_case("conv_transpose2d s2 op1", {{1, 3, 4, 4}, {3, 2, 3, 3}, {2}}, [](Tape&, std::span<const Var> v) {
    return ops::conv_transpose2d(v[0], v[1], v[2], ConvSpec{3, 2, 3, 2, 1, 1, true}, 1);
  }));
  cases.push_back(op_case("softmax length 8", {{8}}, [](Tape&, std::span<const Var> v) { return ops::softmax(v[0], 0); }));
  cases.push_back(
      op_case("softmax rows", {{3, 5}}, [](Tape&, std::span<const Var> v) { return ops::softmax(v[0], 1); }));
  cases.push_back(op_case("layer_norm channel axis", {{2, 4, 3, 3}, {4}, {4}}, [](Tape&, std::span<const Var> v) {
    return ops::layer_norm(v[0], v[1], v[2], 1);
  }));
  cases.push_back(op_case("linear", {{2, 3, 5}, {4, 5}, {4}},
                          [](Tape&, std::span<const Var> v) { return ops::linear(v[0], v[1], v[2]); }));
  cases.push_back(op_case("gelu sigmoid mul", {{2, 7}, {2, 7}}, [](Tape&, std::span<const Var> v) {
    return ops::mul(ops::gelu(v[0]), ops::sigmoid(v[1]));
  }));
  cases.push_back(op_case("div", {{9}, {9}}, [](Tape&, std::span<const Var> v) {
    return ops::div(v[0], ops::add_scalar(ops::square(v[1]), 0.5));
  }));
  cases.push_back(op_case("avg_pool2 roll_hw", {{1, 2, 4, 6}}, [](Tape&, std::span<const Var> v) {
    return ops::avg_pool2(ops::roll_hw(v[0], -1, 2));
  }));
  for (auto fam : {WaveletFamily::Haar, WaveletFamily::Db2, WaveletFamily::Db4}) {
    const std::string n(wavelet_name(fam));
    cases.push_back(op_case("dwt2d " + n, {{1, 2, 8, 8}},
                            [fam](Tape&, std::span<const Var> v) { return ops::dwt2d(v[0], fam); }));
    cases.push_back(op_case("idwt2d " + n, {{1, 8, 4, 4}},
                            [fam](Tape&, std::span<const Var> v) { return ops::idwt2d(v[0], fam); }));
  }

  {
    auto ps = std::make_shared<ParameterSet>();
    Initializer init(1);
    const AttentionConfig cfg{2, 2, 2, false, true};
    const AttentionParams ap = AttentionParams::create(*ps, "attn", 4, cfg, init);
    cases.push_back(layer_case("window_mhsa", {{2, 4, 4}}, ps, [ap, cfg](const BoundParameters& b, std::span<const Var> d) {
      return window_mhsa(d[0], cfg, ap.bind(b));
    }));
  }
  for (bool shifted : {false, true}) {
    auto ps = std::make_shared<ParameterSet>();
    Initializer init(2);
    const AttentionConfig cfg{2, 2, 2, shifted, shifted};
    const AttentionParams ap = AttentionParams::create(*ps, "attn", 4, cfg, init);
    cases.push_back(layer_case(shifted ? "mhca shifted + relative bias" : "mhca", {{1, 4, 4, 4}, {1, 4, 4, 4}}, ps,
                               [ap, cfg](const BoundParameters& b, std::span<const Var> d) {
                                 return mhca(d[0], d[1], cfg, ap.bind(b));
                               }));
  }

  struct BlockVariant {
    const char* suffix;
    bool use_dwt;
    bool parallel;
  };
  for (const BlockVariant& bv : {BlockVariant{"", true, true}, BlockVariant{" w/o-dwt", false, true},
                                 BlockVariant{" w/o-parallel", true, false}}) {
    {
      auto ps = std::make_shared<ParameterSet>();
      Initializer init(3);
      auto blk = std::make_shared<WaveletFormerBlock>(
          WaveletFormerBlock::create(*ps, "enc", tiny_block(2, 4, bv.use_dwt, bv.parallel), init));
      cases.push_back(layer_case(std::string("waveletformer") + bv.suffix, {{1, 2, 8, 8}}, ps,
                                 [blk](const BoundParameters& b, std::span<const Var> d) { return blk->forward(b, d[0]); }));
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      Initializer init(4);
      auto blk = std::make_shared<IWaveletFormerBlock>(
          IWaveletFormerBlock::create(*ps, "dec", tiny_block(4, 2, bv.use_dwt, bv.parallel), init));
      cases.push_back(layer_case(std::string("iwaveletformer") + bv.suffix, {{1, 4, 4, 4}}, ps,
                                 [blk](const BoundParameters& b, std::span<const Var> d) { return blk->forward(b, d[0]); }));
    }
  }
  {
    auto ps = std::make_shared<ParameterSet>();
    Initializer init(5);
    auto blk = std::make_shared<WaveletFormerBlock>(
        WaveletFormerBlock::create(*ps, "enc", tiny_block(2, 4, true, true, true), init));
    cases.push_back(layer_case("waveletformer shifted", {{1, 2, 16, 16}}, ps,
                               [blk](const BoundParameters& b, std::span<const Var> d) { return blk->forward(b, d[0]); }));
  }
  {
    auto ps = std::make_shared<ParameterSet>();
    Initializer init(6);
    auto fam = std::make_shared<FeatureAggregation>(
        FeatureAggregation::create(*ps, "fam", 4, AttentionConfig{2, 0, 2, false, false}, init));
    cases.push_back(layer_case("fam", {{1, 4, 4, 4}, {1, 4, 4, 4}}, ps,
                               [fam](const BoundParameters& b, std::span<const Var> d) {
                                 return fam->forward(b, d[0], d[1]);
                               }));
  }
  {
    auto ps = std::make_shared<ParameterSet>();
    Initializer init(7);
    auto aspp = std::make_shared<AsppBlock>(AsppBlock::create(*ps, "aspp", 3, 4, init));
    cases.push_back(layer_case("aspp", {{1, 3, 8, 8}}, ps,
                               [aspp](const BoundParameters& b, std::span<const Var> d) { return aspp->forward(b, d[0]); }));
  }
  for (Ablation a : {Ablation::Full, Ablation::NoDwt, Ablation::NoParallelConv, Ablation::NoFam, Ablation::NoAspp}) {
    NetworkConfig nc;
    nc.stages = 2;
    nc.base_channels = 2;
    nc.attention = AttentionConfig{2, 0, 2, false, false};
    nc.mlp_ratio = 2;
    nc = apply_ablation(nc, a);
    auto model = std::make_shared<Model>(Model::build(nc, 8));
    auto ps = std::shared_ptr<const ParameterSet>(model, &model->parameters());
    cases.push_back(layer_case("network " + std::string(ablation_name(a)), {{1, 3, 8, 8}}, ps,
                               [model](const BoundParameters& b, std::span<const Var> d) {
                                 return model->forward(b, d[0]);
                               },
                               3));
  }

  // Losses are checked with respect to the prediction; targets stay fixed.
  auto loss_inputs = [](Shape shape) {
    return [shape](std::uint64_t seed) {
      std::mt19937_64 rng(seed);
      Tensor target = random_tensor(shape, rng, 0.1, 0.9);
      Tensor pred = target;
      std::normal_distribution<double> noise(0.0, 0.05);
      // Keep every residual at least 1e-3 from zero, away from the |x| kink.
      for (double& v : pred.data()) {
        const double n = noise(rng);
        v += std::copysign(std::abs(n) + 1e-3, n);
      }
      return std::vector<Tensor>{pred, target};
    };
  };
  {
    GradCase c;
    c.name = "l1_loss";
    c.fn = [](Tape& t, std::span<const Var> v) { return l1_loss(v[0], t.constant(v[1].value())); };
    c.checked_inputs = 1;
    c.inputs = loss_inputs({1, 3, 6, 6});
    cases.push_back(std::move(c));
  }
  {
    GradCase c;
    c.name = "ms_ssim 2 scales";
    c.fn = [](Tape& t, std::span<const Var> v) { return ms_ssim(v[0], t.constant(v[1].value()), 2); };
    c.checked_inputs = 1;
    c.inputs = loss_inputs({1, 2, 24, 24});
    c.max_elements_per_input = 200;
    cases.push_back(std::move(c));
  }
  {
    auto fe = std::make_shared<FeatureExtractor>(FeatureExtractor::create());
    GradCase c;
    c.name = "perceptual_loss";
    c.fn = [fe](Tape& t, std::span<const Var> v) { return perceptual_loss(v[0], t.constant(v[1].value()), *fe); };
    c.checked_inputs = 1;
    c.inputs = loss_inputs({1, 3, 16, 16});
    c.max_elements_per_input = 200;
    cases.push_back(std::move(c));
  }
  {
    auto fe = std::make_shared<FeatureExtractor>(FeatureExtractor::create());
    GradCase c;
    c.name = "total_loss";
    c.fn = [fe](Tape& t, std::span<const Var> v) {
      return total_loss(v[0], t.constant(v[1].value()), LossWeights{}, *fe, 1).total;
    };
    c.checked_inputs = 1;
    c.inputs = loss_inputs({1, 3, 16, 16});
    c.max_elements_per_input = 100;
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<CheckResult> verify_wavelet(const CheckSink& sink) {
  std::vector<CheckResult> out;
  auto emit = [&](CheckResult r) {
    if (sink) sink(r);
    out.push_back(std::move(r));
  };
  for (auto fam : {WaveletFamily::Haar, WaveletFamily::Db2, WaveletFamily::Db4}) {
    const std::string n(wavelet_name(fam));
    const FilterPair f = make_filters(fam);
    const auto& h = f.lowpass;
    double sum = 0.0, energy = 0.0, shifted = 0.0, qmf = 0.0;
    for (double v : h) {
      sum += v;
      energy += v * v;
    }
    const auto len = static_cast<std::ptrdiff_t>(h.size());
    for (std::ptrdiff_t m = 1; 2 * m < len; ++m) {
      double s = 0.0;
      for (std::ptrdiff_t k = 0; k + 2 * m < len; ++k) s += h[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k + 2 * m)];
      shifted = std::max(shifted, std::abs(s));
    }
    for (std::ptrdiff_t k = 0; k < len; ++k) {
      const double expect = (k % 2 == 0 ? 1.0 : -1.0) * h[static_cast<std::size_t>(len - 1 - k)];
      qmf = std::max(qmf, std::abs(f.highpass[static_cast<std::size_t>(k)] - expect));
    }
    emit(make_check("wavelet", n + " sum(h) = sqrt(2)", std::abs(sum - std::numbers::sqrt2), 1e-12));
    emit(make_check("wavelet", n + " sum(h^2) = 1", std::abs(energy - 1.0), 1e-12));
    emit(make_check("wavelet", n + " even-shift products = 0", shifted, 1e-12));
    emit(make_check("wavelet", n + " quadrature mirror highpass", qmf, 1e-15));

    for (int levels = 1; levels <= 3; ++levels) {
      double recon = 0.0, energy_err = 0.0;
      for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 rng(1000 + s);
        const Tensor x = random_tensor({1, 3, 64, 64}, rng);
        const auto bands = wavedec2(x, WaveletSpec{fam, levels});
        recon = std::max(recon, max_abs_diff(waverec2(bands, fam), x));
        double e = sum_squares(bands.back().ll);
        for (const auto& b : bands) e += sum_squares(b.lh) + sum_squares(b.hl) + sum_squares(b.hh);
        const double ex = sum_squares(x);
        energy_err = std::max(energy_err, std::abs(e - ex) / ex);
      }
      const std::string tag = n + " levels=" + std::to_string(levels);
      emit(make_check("wavelet", tag + " perfect reconstruction", recon, 1e-10));
      emit(make_check("wavelet", tag + " energy conservation", energy_err, 1e-10));
    }
  }
  return out;
}

std::vector<CheckResult> verify_grad(int seeds, const CheckSink& sink) {
  std::vector<CheckResult> out;
  for (const GradCase& c : gradient_cases()) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      GradCheckOptions opt;
      opt.seed = static_cast<std::uint64_t>(s);
      opt.max_elements_per_input = c.max_elements_per_input;
      opt.checked_inputs = c.checked_inputs;
      worst = std::max(worst, grad_check(c.fn, c.inputs(static_cast<std::uint64_t>(s)), opt).max_error);
    }
    CheckResult r = make_check("grad", c.name, worst, 1e-4);
    if (sink) sink(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckResult> verify_metrics(const CheckSink& sink) {
  std::vector<CheckResult> out;
  auto emit = [&](CheckResult r) {
    if (sink) sink(r);
    out.push_back(std::move(r));
  };
  std::mt19937_64 rng(42);
  const Tensor x = random_tensor({3, 32, 32}, rng, 0.0, 0.9);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 0.1;
  emit(make_check("metrics", "psnr of 0.1 offset = 20 dB", std::abs(psnr(shifted, x) - 20.0), 1e-9));
  emit(make_check("metrics", "psnr identical = +inf", std::isinf(psnr(x, x)) ? 0.0 : 1.0, 0.5));
  emit(make_check("metrics", "ssim(x, x) = 1", std::abs(ssim(x, x) - 1.0), 1e-9));
  const double c1 = kSsimC1;
  emit(make_check("metrics", "constant-image ssim = C1/(1+C1)",
                  std::abs(ssim(Tensor({3, 16, 16}, 0.0), Tensor({3, 16, 16}, 1.0)) - c1 / (1.0 + c1)), 1e-9));
  std::vector<std::int64_t> uniform(256, 5);
  emit(make_check("metrics", "entropy of uniform histogram = 8", std::abs(histogram_entropy(uniform) - 8.0), 1e-12));
  Tensor ramp({3, 16, 16});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 256; ++i) ramp[c * 256 + i] = static_cast<double>(i) / 255.0;
  emit(make_check("metrics", "entropy of 256-level ramp image = 8", std::abs(entropy(ramp) - 8.0), 1e-12));
  emit(make_check("metrics", "entropy of constant image = 0", std::abs(entropy(Tensor({3, 8, 8}, 0.3))), 1e-12));
  Tape tape;
  const Tensor big = random_tensor({1, 3, 192, 192}, rng, 0.0, 1.0);
  const double ms = ms_ssim(tape.constant(big), tape.constant(big), 5).value().item();
  emit(make_check("metrics", "ms_ssim(x, x) = 1", std::abs(ms - 1.0), 1e-6));
  return out;
}

std::vector<CheckResult> verify_asm(const CheckSink& sink) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::mt19937_64 rng(500 + s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HazeParams p;
    for (double& a : p.airlight) a = 0.6 + 0.4 * u(rng);
    // beta * depth stays below ln(1/0.05), so t >= 0.05 everywhere.
    p.beta = 2.99 * u(rng);
    const DepthKind kinds[3] = {DepthKind::Ramp, DepthKind::Radial, DepthKind::Blocks};
    p.depth = synth_depth(32, 48, kinds[s % 3], rng());
    const Tensor clean = random_tensor({3, 32, 48}, rng, 0.0, 1.0);
    worst = std::max(worst, max_abs_diff(invert_asm(apply_asm(clean, p), p), clean));
  }
  CheckResult r = make_check("asm", "synthesize-invert round trip (10 seeds)", worst, 1e-10);
  if (sink) sink(r);
  return {r};
}

std::vector<CheckResult> run_verify_suite(std::string_view suite, const CheckSink& sink) {
  if (suite == "wavelet") return verify_wavelet(sink);
  if (suite == "grad") return verify_grad(5, sink);
  if (suite == "metrics") return verify_metrics(sink);
  if (suite == "asm") return verify_asm(sink);
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (auto part : {verify_wavelet(sink), verify_grad(5, sink), verify_metrics(sink), verify_asm(sink)})
      all.insert(all.end(), part.begin(), part.end());
    return all;
  }
  throw ConfigError("unknown suite '" + std::string(suite) + "' (expected wavelet, grad, metrics, asm or all)");
}

}  // namespace wfn
