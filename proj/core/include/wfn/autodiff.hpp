#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "wfn/tensor.hpp"

namespace wfn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int axis) const { return value().dim(axis); }
};

/// Reverse-mode differentiation tape.
///
/// Every operation appends one node holding its forward value and a closure
/// that maps the node's output gradient to its parents' gradients (a
/// vector-Jacobian product). Nodes are appended in topological order, so
/// backward() walks them in reverse.
class Tape {
 public:
  /// Adjoint closure: reads grad(self) and accumulates into parents.
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Records the result of an operation. The backward closure is dropped when
  /// no parent requires a gradient.
  /// Raises NumericError naming `op` if the value is not finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(const char* op, Tensor value, std::span<const Var> parents, Backward backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of a node; empty if none reached it during backward().
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  const Tensor& grad(std::uint32_t id) const { return nodes_[id].grad; }

  /// Mutable gradient buffer for accumulation, zero-initialised on first use.
  /// Only valid for nodes that require a gradient.
  std::span<double> grad_buffer(std::uint32_t id);

  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  // deque keeps references to earlier values valid while recording.
  std::deque<Node> nodes_;
};

}  // namespace wfn
