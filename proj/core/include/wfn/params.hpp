#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wfn/autodiff.hpp"

namespace wfn {

/// Named, ordered model parameters. Order is creation order and is the
/// checkpoint payload order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::int64_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Parameters placed on a tape, as variables when trainable.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterSet& params, bool trainable = true);
  /// Explicit bindings, indexed like the ParameterSet they stand in for.
  BoundParameters(Tape& tape, std::vector<Var> vars);

  Var operator[](std::size_t i) const { return vars_.at(i); }
  Tape& tape() const { return *tape_; }
  std::size_t size() const noexcept { return vars_.size(); }
  /// Gradient per parameter after Tape::backward; zeros where none arrived.
  std::vector<Tensor> gradients() const;

 private:
  Tape* tape_;
  std::vector<Var> vars_;
};

/// Seeded parameter initialisation.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Normal(0, std) resampled until within two standard deviations.
  Tensor truncated_normal(Shape shape, double std = 0.02);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor fan_in_uniform(Shape shape, std::int64_t fan_in);
  Tensor uniform(Shape shape, double lo, double hi);

 private:
  std::mt19937_64 rng_;
};

}  // namespace wfn
