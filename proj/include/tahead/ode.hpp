// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tahead/tensor.hpp"

namespace tahead {

/// dh/dt = f(t, h). Implementations must be pure.
using Dynamics = std::function<Tensor(double t, const Tensor& h)>;

enum class SolverMethod { rk4, dopri5 };

std::string to_string(SolverMethod m);
SolverMethod solver_method_from_string(const std::string& s);

struct SolverConfig {
  SolverMethod method = SolverMethod::dopri5;
  double rtol = 1e-5;
  double atol = 1e-7;
  long max_steps = 10'000;
  /// 0 selects the step automatically from the local derivative scale.
  double initial_step = 0.0;
  /// Step count for fixed-step rk4 over the whole horizon.
  int fixed_step_count = 20;

  void validate() const;
};

struct SolveResult {
  Tensor h_end;
  long steps_accepted = 0;
  long steps_rejected = 0;
  /// t0 followed by every accepted step end; strictly monotone towards t1.
  std::vector<double> t_grid;
};

/// One classical Runge-Kutta step from (t, h) with signed step dt.
Tensor rk4_step(const Dynamics& f, double t, const Tensor& h, double dt);

/// `steps` equal rk4 steps from t0 to t1 (either direction).
SolveResult rk4_solve(const Tensor& h0, const Dynamics& f, double t0, double t1, int steps);

/// Adaptive Dormand-Prince 5(4) with the embedded error estimate and a
/// standard I-controller (safety 0.9, growth clamped to [0.2, 10]).
SolveResult dopri5_adaptive(const Tensor& h0, const Dynamics& f, double t0, double t1, const SolverConfig& cfg);

/// Dormand-Prince 5th-order update taken with `steps` equal steps, no error
/// control. Used for convergence-order studies.
SolveResult dopri5_fixed(const Tensor& h0, const Dynamics& f, double t0, double t1, int steps);

/// Integrate from t0 to t1; t1 < t0 integrates backwards in time (final-value
/// problem). t0 == t1 returns h0 unchanged with no steps.
SolveResult ode_solve(const Tensor& h0, const Dynamics& f, double t0, double t1, const SolverConfig& cfg);

}  // namespace tahead
