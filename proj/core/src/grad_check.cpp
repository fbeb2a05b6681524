#include "wfn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace wfn {
namespace {

double projected(const Differentiable& fn, const std::vector<Tensor>& inputs, const Tensor& projection) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Tensor& y = fn(tape, vars).value();
  double s = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) s += projection[i] * y[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const Differentiable& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  const Var out = fn(tape, vars);
  Tensor projection(out.shape());
  for (auto& v : projection.data()) v = uni(rng);
  tape.backward(out, projection);

  const std::size_t checked =
      options.checked_inputs == 0 ? inputs.size() : std::min(options.checked_inputs, inputs.size());
  std::vector<double> diffs, scales;
  std::int64_t elements = 0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < checked; ++k) {
    const std::int64_t n = inputs[k].numel();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_elements_per_input > 0 && n > options.max_elements_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(options.max_elements_per_input));
    }
    const Tensor& analytic = tape.grad(vars[k]);
    double max_diff = 0.0, scale = 0.0;
    for (std::int64_t i : idx) {
      const double orig = inputs[k][i];
      probe[k][i] = orig + options.step;
      const double fp = projected(fn, probe, projection);
      probe[k][i] = orig - options.step;
      const double fm = projected(fn, probe, projection);
      probe[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    diffs.push_back(max_diff);
    scales.push_back(scale);
    elements += static_cast<std::int64_t>(idx.size());
  }

  GradCheckReport report;
  report.elements_checked = elements;
  const double global = scales.empty() ? 0.0 : *std::max_element(scales.begin(), scales.end());
  for (std::size_t k = 0; k < diffs.size(); ++k) {
    const double denom = std::max(scales[k], 1e-3 * global);
    const double err = denom > 1e-12 ? diffs[k] / denom : diffs[k];
    report.input_errors.push_back(err);
    report.max_error = std::max(report.max_error, err);
  }
  report.passed = report.max_error < options.tolerance;
  return report;
}

}  // namespace wfn
