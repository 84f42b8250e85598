// SPDX-License-Identifier: Apache-2.0
// Central finite-difference oracle for tape gradients. Test-only.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tahead/tape.hpp"

namespace tahead::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_scalar(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  return fn(tape, vars).value().item();
}

inline std::vector<Tensor> analytic_grads(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(fn(tape, vars));
  std::vector<Tensor> out;
  for (auto v : vars) out.push_back(tape.grad(v));
  return out;
}

inline std::vector<Tensor> fd_grads(const ScalarFn& fn, std::vector<Tensor> inputs, double eps = 1e-6) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g = Tensor::zeros_like(inputs[k]);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + eps;
      const double fp = eval_scalar(fn, inputs);
      inputs[k][i] = x0 - eps;
      const double fm = eval_scalar(fn, inputs);
      inputs[k][i] = x0;
      g[i] = (fp - fm) / (2 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// ||a - b|| / (||a|| + 1e-12) over the whole gradient.
inline double rel_err(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num) / (std::sqrt(den) + 1e-12);
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  return rel_err(Tensor(Shape{a.size()}, a), Tensor(Shape{b.size()}, b));
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

/// Worst relative error over all inputs.
inline double gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-6) {
  const auto a = analytic_grads(fn, inputs);
  const auto f = fd_grads(fn, inputs, eps);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, rel_err(a[k], f[k]));
  return worst;
}

}  // namespace tahead::testing
