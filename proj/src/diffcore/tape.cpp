// SPDX-License-Identifier: Apache-2.0
#include "tahead/tape.hpp"

#include "tahead/errors.hpp"

namespace tahead {

const Tensor& Var::value() const { return tape->value(id); }

Tensor Gradients::of(const Parameter& p) const {
  auto it = map_.find(&p);
  if (it == map_.end()) return Tensor::zeros_like(p.value);
  return it->second;
}

void Gradients::add(const Parameter& p, const Tensor& g) {
  auto [it, inserted] = map_.try_emplace(&p, g);
  if (!inserted) axpy(1.0, g, it->second);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("leaf tensor contains NaN/Inf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  if (!p.value.all_finite()) throw NonFiniteError("parameter '" + p.name + "' contains NaN/Inf");
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(const char* op, Tensor value, std::vector<int> parents, BackwardFn fn) {
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + " produced NaN/Inf");
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractViolation("backward: node belongs to another tape");
  if (value(loss).numel() != 1)
    throw ContractViolation("backward: loss must be scalar, got shape " + shape_str(value(loss).shape()));
  return backward(loss, Tensor(value(loss).shape(), 1.0));
}

Gradients Tape::backward(Var out, const Tensor& seed) {
  if (out.tape != this) throw ContractViolation("backward: node belongs to another tape");
  if (seed.numel() != value(out).numel()) throw ContractViolation("backward: seed shape mismatch");
  if (!seed.all_finite()) throw NonFiniteError("backward: seed contains NaN/Inf");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_ref(out.id).storage() = seed.storage();

  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }

  Gradients grads;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.has_grad) {
      if (!n.grad.all_finite()) throw NonFiniteError("gradient of '" + param->name + "' is NaN/Inf");
      grads.add(*param, n.grad);
    } else {
      grads.add(*param, Tensor::zeros_like(n.value));
    }
  }
  return grads;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

}  // namespace tahead
