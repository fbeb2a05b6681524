#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wfn/autodiff.hpp"

namespace wfn {

/// A differentiable computation of the inputs, built on the given tape.
using Differentiable = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Elements probed per input; a seeded random subset when the input is
  /// larger. Non-positive means every element.
  std::int64_t max_elements_per_input = 0;
  /// Only the first n inputs are probed; 0 probes all. Later inputs are
  /// still passed to the function (e.g. fixed targets).
  std::size_t checked_inputs = 0;
};

struct GradCheckReport {
  /// Per input: max |analytic - numeric| over probed elements divided by the
  /// larger of that input's largest gradient magnitude and 1e-3 of the
  /// largest over all inputs (absolute error when every gradient vanishes).
  /// The floor keeps structurally zero gradients from dividing noise by
  /// noise.
  std::vector<double> input_errors;
  double max_error = 0.0;
  std::int64_t elements_checked = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients against central differences
/// (f(x+h) - f(x-h)) / 2h. Non-scalar outputs are reduced by a seeded random
/// projection sum(r * y). Failures are reported, not raised.
GradCheckReport grad_check(const Differentiable& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace wfn
