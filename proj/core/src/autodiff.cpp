#include "wfn/autodiff.hpp"

namespace wfn {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value) {
  value.require_finite("variable");
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> parents, Backward backward) {
  value.require_finite(op);
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape != this) throw Error("operation mixes variables from different tapes");
    needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::span<double> Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad.data();
}

void Tape::backward(Var root) {
  if (value(root).numel() != 1) {
    throw ShapeError("backward() without a seed needs a scalar root, got " + to_string(value(root).shape()));
  }
  backward(root, Tensor::full(value(root).shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  if (seed.shape() != value(root).shape()) throw ShapeError("backward seed shape mismatch");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad = seed;
  for (std::int64_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) {
      n.grad.require_finite("backward pass");
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }
}

}  // namespace wfn
