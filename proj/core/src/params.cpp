#include "wfn/params.hpp"

#include <cmath>

namespace wfn {

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::int64_t ParameterSet::total_elements() const {
  std::int64_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

BoundParameters::BoundParameters(Tape& tape, const ParameterSet& params, bool trainable) : tape_(&tape) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.push_back(trainable ? tape.variable(params.value(i)) : tape.constant(params.value(i)));
  }
}

BoundParameters::BoundParameters(Tape& tape, std::vector<Var> vars) : tape_(&tape), vars_(std::move(vars)) {}

std::vector<Tensor> BoundParameters::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (Var v : vars_) {
    const Tensor& g = tape_->grad(v);
    out.push_back(g.empty() ? Tensor::zeros(v.shape()) : g);
  }
  return out;
}

Tensor Initializer::truncated_normal(Shape shape, double std) {
  std::normal_distribution<double> dist(0.0, std);
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    do {
      v = dist(rng_);
    } while (std::abs(v) > 2.0 * std);
  }
  return t;
}

Tensor Initializer::fan_in_uniform(Shape shape, std::int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform(std::move(shape), -bound, bound);
}

Tensor Initializer::uniform(Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

}  // namespace wfn
