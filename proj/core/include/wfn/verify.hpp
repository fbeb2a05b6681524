#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "wfn/grad_check.hpp"

namespace wfn {

/// Outcome of one property check: measured error against its tolerance.
struct CheckResult {
  std::string suite;
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

std::string format_check(const CheckResult& r);

/// A differentiable computation with a seeded generator of its inputs.
/// Parameters of layers under test are passed as extra inputs so they are
/// checked too.
struct GradCase {
  std::string name;
  Differentiable fn;
  std::function<std::vector<Tensor>(std::uint64_t seed)> inputs;
  std::int64_t max_elements_per_input = 0;
  /// Leading inputs to check; 0 checks all.
  std::size_t checked_inputs = 0;
};

/// Every differentiable operation of the library: tensor ops, wavelet
/// transforms, attention, the four blocks and their ablated forms, a tiny
/// end-to-end network and the three losses.
std::vector<GradCase> gradient_cases();

using CheckSink = std::function<void(const CheckResult&)>;

std::vector<CheckResult> verify_wavelet(const CheckSink& sink = {});
std::vector<CheckResult> verify_grad(int seeds = 5, const CheckSink& sink = {});
std::vector<CheckResult> verify_metrics(const CheckSink& sink = {});
std::vector<CheckResult> verify_asm(const CheckSink& sink = {});
/// suite is one of wavelet, grad, metrics, asm or all.
std::vector<CheckResult> run_verify_suite(std::string_view suite, const CheckSink& sink = {});

}  // namespace wfn
