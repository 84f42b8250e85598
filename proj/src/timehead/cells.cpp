// SPDX-License-Identifier: Apache-2.0
#include "tahead/cells.hpp"

#include <cmath>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {

std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::rnn: return "rnn";
    case CellKind::gru: return "gru";
    case CellKind::lstm: return "lstm";
  }
  return "?";
}

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "rnn") return CellKind::rnn;
  if (s == "gru") return CellKind::gru;
  if (s == "lstm") return CellKind::lstm;
  throw ContractViolation("unknown cell kind '" + s + "'");
}

RecurrentCell::RecurrentCell(CellKind kind, const std::string& name, std::size_t input_dim, std::size_t dim,
                             Rng& rng)
    : kind_(kind), dim_(dim) {
  static const char* const rnn_names[] = {"h"};
  static const char* const gru_names[] = {"z", "r", "n"};
  static const char* const lstm_names[] = {"i", "f", "o", "g"};
  std::vector<const char*> names;
  switch (kind) {
    case CellKind::rnn: names.assign(std::begin(rnn_names), std::end(rnn_names)); break;
    case CellKind::gru: names.assign(std::begin(gru_names), std::end(gru_names)); break;
    case CellKind::lstm: names.assign(std::begin(lstm_names), std::end(lstm_names)); break;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  auto fill = [&](Parameter& p, std::string pname, Shape shape) {
    p.name = std::move(pname);
    p.value = Tensor(std::move(shape));
    for (auto& v : p.value.storage()) v = u(rng);
  };
  for (const char* g : names) {
    Gate gate;
    const std::string base = name + "." + g;
    fill(gate.w, base + ".w", Shape{input_dim, dim});
    fill(gate.u, base + ".u", Shape{dim, dim});
    fill(gate.b, base + ".b", Shape{dim});
    gates_.push_back(std::move(gate));
  }
}

Var RecurrentCell::pre(Tape& tape, std::size_t gate, Var x, Var h) {
  Gate& g = gates_[gate];
  return ops::add(ops::add(ops::matmul(x, tape.param(g.w)), ops::matmul(h, tape.param(g.u))), tape.param(g.b));
}

CellState RecurrentCell::step(Tape& tape, Var x, const CellState& state) {
  require(state.h.value().cols() == dim_, "RecurrentCell: hidden width mismatch");
  Var h = state.h;
  switch (kind_) {
    case CellKind::rnn: return {ops::tanh(pre(tape, 0, x, h)), std::nullopt};
    case CellKind::gru: {
      Var z = ops::sigmoid(pre(tape, 0, x, h));
      Var r = ops::sigmoid(pre(tape, 1, x, h));
      Gate& gn = gates_[2];
      Var n = ops::tanh(ops::add(
          ops::add(ops::matmul(x, tape.param(gn.w)), ops::matmul(ops::mul(r, h), tape.param(gn.u))),
          tape.param(gn.b)));
      return {ops::add(h, ops::mul(z, ops::sub(n, h))), std::nullopt};
    }
    case CellKind::lstm: {
      require(state.c.has_value(), "RecurrentCell: lstm needs a memory state");
      Var i = ops::sigmoid(pre(tape, 0, x, h));
      Var f = ops::sigmoid(pre(tape, 1, x, h));
      Var o = ops::sigmoid(pre(tape, 2, x, h));
      Var g = ops::tanh(pre(tape, 3, x, h));
      Var c = ops::add(ops::mul(f, *state.c), ops::mul(i, g));
      return {ops::mul(o, ops::tanh(c)), c};
    }
  }
  throw ContractViolation("RecurrentCell: bad kind");
}

std::vector<Parameter*> RecurrentCell::parameters() {
  std::vector<Parameter*> out;
  for (auto& g : gates_) {
    out.push_back(&g.w);
    out.push_back(&g.u);
    out.push_back(&g.b);
  }
  return out;
}

std::vector<const Parameter*> RecurrentCell::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& g : gates_) {
    out.push_back(&g.w);
    out.push_back(&g.u);
    out.push_back(&g.b);
  }
  return out;
}

}  // namespace tahead
