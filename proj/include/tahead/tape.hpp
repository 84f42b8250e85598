// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tahead/tensor.hpp"

namespace tahead {

/// A named trainable tensor. Models own these; tapes only point at them.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Parameter gradients produced by one backward pass.
class Gradients {
 public:
  /// Gradient for `p`, or zeros shaped like `p` when it was not reachable.
  Tensor of(const Parameter& p) const;
  bool contains(const Parameter& p) const { return map_.count(&p) != 0; }
  void add(const Parameter& p, const Tensor& g);
  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> map_;
};

/// Append-only record of eagerly evaluated ops.
///
/// Nodes are stored in creation order, so parents always precede children and
/// the reverse sweep is a plain backwards loop. One tape belongs to one
/// training step; it is not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  /// Leaf bound to `p`. Registering the same parameter twice returns the same node.
  Var param(Parameter& p);

  /// Append an op result. Throws NonFiniteError when `value` has NaN/Inf.
  Var record(const char* op, Tensor value, std::vector<int> parents, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar node.
  Gradients backward(Var loss);
  /// Reverse sweep seeded with an arbitrary cotangent of `out`'s shape.
  Gradients backward(Var out, const Tensor& seed);

  /// Gradient accumulated at `v` by the last backward pass (zeros if unreached).
  Tensor grad(Var v) const;

  // For op implementations: accumulator of node `id`, allocated on first use.
  Tensor& grad_ref(int id);
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }
  const std::vector<int>& parents(int id) const { return nodes_[id].parents; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  // deque: references returned by value() stay valid while the tape grows.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace tahead
