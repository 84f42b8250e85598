// SPDX-License-Identifier: Apache-2.0
#include "tahead/ode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tahead/errors.hpp"

namespace tahead {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// 5th minus embedded 4th order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

Tensor eval_checked(const Dynamics& f, double t, const Tensor& h) {
  Tensor out = f(t, h);
  if (out.numel() != h.numel()) throw ContractViolation("dynamics returned a tensor of the wrong size");
  if (!out.all_finite()) {
    std::ostringstream os;
    os << "vector field returned NaN/Inf at t=" << t;
    throw SolverInstability(os.str());
  }
  return out;
}

// y + dt * sum_k w_k * k_k
Tensor combine(const Tensor& y, double dt, std::initializer_list<std::pair<double, const Tensor*>> terms) {
  Tensor out = y;
  auto& o = out.storage();
  for (const auto& [w, k] : terms) {
    if (w == 0.0) continue;
    const double s = dt * w;
    const auto& kd = k->storage();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * kd[i];
  }
  return out;
}

struct DopriStep {
  Tensor y_new;
  Tensor k7;   // f(t + dt, y_new), reused as k1 of the next step
  Tensor err;  // dt * (e . k)
};

DopriStep dopri_step(const Dynamics& f, double t, const Tensor& y, const Tensor& k1, double dt) {
  Tensor k2 = eval_checked(f, t + c2 * dt, combine(y, dt, {{a21, &k1}}));
  Tensor k3 = eval_checked(f, t + c3 * dt, combine(y, dt, {{a31, &k1}, {a32, &k2}}));
  Tensor k4 = eval_checked(f, t + c4 * dt, combine(y, dt, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
  Tensor k5 = eval_checked(f, t + c5 * dt, combine(y, dt, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
  Tensor k6 =
      eval_checked(f, t + dt, combine(y, dt, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
  Tensor y_new = combine(y, dt, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
  Tensor k7 = eval_checked(f, t + dt, y_new);
  Tensor err = combine(Tensor::zeros_like(y), dt, {{e1, &k1}, {e3, &k3}, {e4, &k4}, {e5, &k5}, {e6, &k6}, {e7, &k7}});
  return {std::move(y_new), std::move(k7), std::move(err)};
}

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

double error_ratio(const Tensor& err, const Tensor& y0, const Tensor& y1, double rtol, double atol) {
  std::vector<double> scaled(err.numel());
  for (std::size_t i = 0; i < err.numel(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    scaled[i] = err[i] / sc;
  }
  return rms(scaled);
}

double initial_step(const Dynamics& f, double t0, const Tensor& y0, const Tensor& f0, double dir, double rtol,
                    double atol) {
  std::vector<double> a(y0.numel()), b(y0.numel());
  for (std::size_t i = 0; i < y0.numel(); ++i) {
    const double sc = atol + std::abs(y0[i]) * rtol;
    a[i] = y0[i] / sc;
    b[i] = f0[i] / sc;
  }
  const double d0 = rms(a), d1 = rms(b);
  const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Tensor y1 = combine(y0, dir * h0, {{1.0, &f0}});
  Tensor f1 = eval_checked(f, t0 + dir * h0, y1);
  for (std::size_t i = 0; i < y0.numel(); ++i) {
    const double sc = atol + std::abs(y0[i]) * rtol;
    a[i] = (f1[i] - f0[i]) / sc;
  }
  const double d2 = rms(a) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

}  // namespace

std::string to_string(SolverMethod m) { return m == SolverMethod::rk4 ? "rk4" : "dopri5"; }

SolverMethod solver_method_from_string(const std::string& s) {
  if (s == "rk4") return SolverMethod::rk4;
  if (s == "dopri5") return SolverMethod::dopri5;
  throw ContractViolation("unknown solver method '" + s + "'");
}

void SolverConfig::validate() const {
  require(rtol > 0.0 && atol > 0.0, "solver tolerances must be positive");
  require(max_steps >= 1, "max_steps must be >= 1");
  require(fixed_step_count >= 1, "fixed_step_count must be >= 1");
  require(initial_step >= 0.0, "initial_step must be >= 0");
}

Tensor rk4_step(const Dynamics& f, double t, const Tensor& h, double dt) {
  require(dt != 0.0, "rk4_step: dt must be nonzero");
  const Tensor k1 = eval_checked(f, t, h);
  const Tensor k2 = eval_checked(f, t + 0.5 * dt, combine(h, dt, {{0.5, &k1}}));
  const Tensor k3 = eval_checked(f, t + 0.5 * dt, combine(h, dt, {{0.5, &k2}}));
  const Tensor k4 = eval_checked(f, t + dt, combine(h, dt, {{1.0, &k3}}));
  return combine(h, dt, {{1.0 / 6, &k1}, {2.0 / 6, &k2}, {2.0 / 6, &k3}, {1.0 / 6, &k4}});
}

SolveResult rk4_solve(const Tensor& h0, const Dynamics& f, double t0, double t1, int steps) {
  require(steps >= 1, "rk4_solve: steps must be >= 1");
  require(h0.all_finite(), "rk4_solve: h0 must be finite");
  SolveResult res;
  res.h_end = h0;
  res.t_grid.push_back(t0);
  if (t0 == t1) return res;
  const double dt = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * dt;
    res.h_end = rk4_step(f, t, res.h_end, dt);
    res.t_grid.push_back(i + 1 == steps ? t1 : t0 + (i + 1) * dt);
    ++res.steps_accepted;
  }
  return res;
}

SolveResult dopri5_fixed(const Tensor& h0, const Dynamics& f, double t0, double t1, int steps) {
  require(steps >= 1, "dopri5_fixed: steps must be >= 1");
  SolveResult res;
  res.h_end = h0;
  res.t_grid.push_back(t0);
  if (t0 == t1) return res;
  const double dt = (t1 - t0) / steps;
  Tensor k1 = eval_checked(f, t0, h0);
  for (int i = 0; i < steps; ++i) {
    auto st = dopri_step(f, t0 + i * dt, res.h_end, k1, dt);
    res.h_end = std::move(st.y_new);
    k1 = std::move(st.k7);
    res.t_grid.push_back(i + 1 == steps ? t1 : t0 + (i + 1) * dt);
    ++res.steps_accepted;
  }
  return res;
}

SolveResult dopri5_adaptive(const Tensor& h0, const Dynamics& f, double t0, double t1, const SolverConfig& cfg) {
  cfg.validate();
  require(h0.all_finite(), "dopri5: h0 must be finite");
  SolveResult res;
  res.h_end = h0;
  res.t_grid.push_back(t0);
  if (t0 == t1) return res;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  Tensor k1 = eval_checked(f, t0, h0);
  double step = cfg.initial_step > 0.0 ? cfg.initial_step : initial_step(f, t0, h0, k1, dir, cfg.rtol, cfg.atol);
  step = std::min(step, span);

  double t = t0;
  Tensor& y = res.h_end;
  while (dir * (t1 - t) > 0.0) {
    if (res.steps_accepted + res.steps_rejected >= cfg.max_steps) {
      std::ostringstream os;
      os << "dopri5: step budget of " << cfg.max_steps << " exhausted at t=" << t << " while integrating [" << t0
         << ", " << t1 << "]";
      throw SolverDivergence(os.str());
    }
    const double remaining = std::abs(t1 - t);
    const bool last = step >= remaining;
    const double dt = dir * (last ? remaining : step);
    if (std::abs(dt) <= 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "dopri5: step size underflow at t=" << t;
      throw SolverDivergence(os.str());
    }

    auto st = dopri_step(f, t, y, k1, dt);
    const double ratio = error_ratio(st.err, y, st.y_new, cfg.rtol, cfg.atol);
    if (!std::isfinite(ratio)) {
      ++res.steps_rejected;
      step = std::abs(dt) * kMinFactor;
      continue;
    }
    const double factor =
        ratio == 0.0 ? kMaxFactor : std::clamp(kSafety * std::pow(ratio, -1.0 / 5.0), kMinFactor, kMaxFactor);
    if (ratio <= 1.0) {
      t = last ? t1 : t + dt;
      y = std::move(st.y_new);
      k1 = std::move(st.k7);
      res.t_grid.push_back(t);
      ++res.steps_accepted;
      step = std::abs(dt) * factor;
    } else {
      ++res.steps_rejected;
      step = std::abs(dt) * std::min(1.0, factor);
    }
  }
  return res;
}

SolveResult ode_solve(const Tensor& h0, const Dynamics& f, double t0, double t1, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.method == SolverMethod::rk4) return rk4_solve(h0, f, t0, t1, cfg.fixed_step_count);
  return dopri5_adaptive(h0, f, t0, t1, cfg);
}

}  // namespace tahead
