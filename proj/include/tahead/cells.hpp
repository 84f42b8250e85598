// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tahead/dense.hpp"

namespace tahead {

enum class CellKind { rnn, gru, lstm };

std::string to_string(CellKind k);
CellKind cell_kind_from_string(const std::string& s);

/// Gate parameters: pre = x W + h U + b.
struct Gate {
  Parameter w;  // [in, dim]
  Parameter u;  // [dim, dim]
  Parameter b;  // [dim]
};

struct CellState {
  Var h;
  std::optional<Var> c;  // LSTM memory, absent for rnn/gru
};

/// Observation-update cell for ODE-RNN heads.
///
///   rnn:  h' = tanh(x Wh + h Uh + bh)
///   gru:  z = sig(.), r = sig(.), n = tanh(x Wn + (r*h) Un + bn), h' = h + z*(n - h)
///   lstm: i,f,o = sig(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c')
class RecurrentCell {
 public:
  RecurrentCell() = default;
  RecurrentCell(CellKind kind, const std::string& name, std::size_t input_dim, std::size_t dim, Rng& rng);

  CellState step(Tape& tape, Var x, const CellState& state);

  CellKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Gates in a fixed order: rnn {h}; gru {z, r, n}; lstm {i, f, o, g}.
  std::vector<Gate>& gates() noexcept { return gates_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  Var pre(Tape& tape, std::size_t gate, Var x, Var h);

  CellKind kind_ = CellKind::gru;
  std::size_t dim_ = 0;
  std::vector<Gate> gates_;
};

}  // namespace tahead
