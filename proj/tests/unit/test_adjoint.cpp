// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fields.hpp"
#include "gradcheck.hpp"
#include "tahead/adjoint.hpp"
#include "tahead/errors.hpp"
#include "tahead/field.hpp"
#include "tahead/ops.hpp"

using namespace tahead;
using tahead::testing::LinearField;
using tahead::testing::random_tensor;
using tahead::testing::rel_err;
using tahead::testing::ZeroField;

namespace {

SolverConfig tight() {
  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-11;
  return cfg;
}

SolverConfig rk4(int steps) {
  SolverConfig cfg;
  cfg.method = SolverMethod::rk4;
  cfg.fixed_step_count = steps;
  return cfg;
}

// L = g . h(t1) under a fixed-step rk4 map, which is smooth in every input.
double rk4_loss(DifferentiableField& f, const Tensor& h0, double t0, double t1, const Tensor& g, int steps) {
  return dot(g, rk4_solve(h0, f.dynamics(), t0, t1, steps).h_end);
}

std::vector<double> fd_theta(DifferentiableField& f, const Tensor& h0, double t0, double t1, const Tensor& g,
                             int steps, double eps = 1e-6) {
  std::vector<double> out;
  for (auto* p : f.parameters()) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double v0 = p->value[i];
      p->value[i] = v0 + eps;
      const double lp = rk4_loss(f, h0, t0, t1, g, steps);
      p->value[i] = v0 - eps;
      const double lm = rk4_loss(f, h0, t0, t1, g, steps);
      p->value[i] = v0;
      out.push_back((lp - lm) / (2 * eps));
    }
  }
  return out;
}

Tensor fd_h0(DifferentiableField& f, Tensor h0, double t0, double t1, const Tensor& g, int steps,
             double eps = 1e-6) {
  Tensor out = Tensor::zeros_like(h0);
  for (std::size_t i = 0; i < h0.numel(); ++i) {
    const double v0 = h0[i];
    h0[i] = v0 + eps;
    const double lp = rk4_loss(f, h0, t0, t1, g, steps);
    h0[i] = v0 - eps;
    const double lm = rk4_loss(f, h0, t0, t1, g, steps);
    h0[i] = v0;
    out[i] = (lp - lm) / (2 * eps);
  }
  return out;
}

}  // namespace

TEST_CASE("zero field: gradient passes straight through") {
  ZeroField f;
  const Tensor g = Tensor::row({0.3, -1.2});
  auto res = grad_adjoint(Tensor::row({1.0, 2.0}), f, 0.0, 2.0, g, SolverConfig{});
  CHECK(res.dh0 == g);
  REQUIRE(res.dtheta.size() == 1);
  CHECK(res.dtheta[0] == 0.0);
}

TEST_CASE("linear field u = theta h: dL/dtheta = e at theta = 1") {
  LinearField f(1.0);
  auto res = grad_adjoint(Tensor::row({1.0}), f, 0.0, 1.0, Tensor::row({1.0}), tight());
  // L = h(1) = exp(theta); dL/dtheta = t exp(theta t) at t = 1.
  CHECK(res.dtheta[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-7));
  CHECK(res.dh0[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-7));
  // dL/dt1 = u(h(1)) = e; dL/dt0 = -dL/dh0 * u(h0) = -e.
  CHECK(res.dt1 == doctest::Approx(std::exp(1.0)).epsilon(1e-7));
  CHECK(res.dt0 == doctest::Approx(-std::exp(1.0)).epsilon(1e-7));
}

TEST_CASE("adjoint, through-solver and finite differences agree on random fields") {
  Rng rng(77);
  std::mt19937_64 r(78);
  std::uniform_int_distribution<int> dim(2, 6);
  const int steps = 200;
  for (int k = 0; k < 20; ++k) {
    const std::size_t d = static_cast<std::size_t>(dim(r));
    VectorField f("f", d, {12}, rng);
    const Tensor h0 = random_tensor({d}, r);
    const Tensor g = random_tensor({d}, r);
    const double t1 = 0.5 + 0.1 * k;

    const auto adj = grad_adjoint(h0, f, 0.0, t1, g, tight());
    const auto thr = grad_through_solver(h0, f, 0.0, t1, g, rk4(steps));
    const auto fd = fd_theta(f, h0, 0.0, t1, g, steps);
    const auto fdh = fd_h0(f, h0, 0.0, t1, g, steps);

    CHECK(rel_err(adj.dtheta, fd) < 1e-4);
    CHECK(rel_err(thr.dtheta, fd) < 1e-4);
    CHECK(rel_err(adj.dtheta, thr.dtheta) < 1e-4);
    CHECK(rel_err(adj.dh0, fdh) < 1e-4);
    CHECK(rel_err(thr.dh0, fdh) < 1e-4);
  }
}

TEST_CASE("through-solver converges to the adjoint as steps grow") {
  Rng rng(5);
  std::mt19937_64 r(6);
  VectorField f("f", 3, {10}, rng);
  const Tensor h0 = random_tensor({3}, r);
  const Tensor g = random_tensor({3}, r);
  const auto adj = grad_adjoint(h0, f, 0.0, 2.0, g, tight());
  double prev = 1e300;
  for (int steps : {2, 4, 8, 16}) {
    const double err = rel_err(grad_through_solver(h0, f, 0.0, 2.0, g, rk4(steps)).dtheta, adj.dtheta);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("gradient is linear in the upstream gradient") {
  Rng rng(8);
  std::mt19937_64 r(9);
  VectorField f("f", 3, {8}, rng);
  const Tensor h0 = random_tensor({3}, r);
  const Tensor g1 = random_tensor({3}, r);
  const Tensor g2 = random_tensor({3}, r);
  const auto cfg = tight();
  const auto a = grad_adjoint(h0, f, 0.0, 1.0, g1, cfg);
  const auto b = grad_adjoint(h0, f, 0.0, 1.0, g2, cfg);
  const auto c = grad_adjoint(h0, f, 0.0, 1.0, g1 + 2.0 * g2, cfg);
  std::vector<double> combo(a.dtheta.size());
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a.dtheta[i] + 2.0 * b.dtheta[i];
  CHECK(rel_err(c.dtheta, combo) < 1e-6);
  CHECK(rel_err(c.dh0, a.dh0 + 2.0 * b.dh0) < 1e-6);

  const auto z = grad_adjoint(h0, f, 0.0, 1.0, Tensor::zeros_like(h0), cfg);
  for (double v : z.dtheta) CHECK(v == 0.0);
  for (double v : z.dh0.data()) CHECK(v == 0.0);
}

TEST_CASE("endpoint time gradients") {
  Rng rng(12);
  std::mt19937_64 r(13);
  VectorField f("f", 3, {8}, rng);
  const Tensor h0 = random_tensor({3}, r);
  const Tensor g = random_tensor({3}, r);
  const auto adj = grad_adjoint(h0, f, 0.2, 1.1, g, tight());
  const double eps = 1e-5;
  const int steps = 400;
  const double fd_t1 = (rk4_loss(f, h0, 0.2, 1.1 + eps, g, steps) - rk4_loss(f, h0, 0.2, 1.1 - eps, g, steps)) / (2 * eps);
  const double fd_t0 = (rk4_loss(f, h0, 0.2 + eps, 1.1, g, steps) - rk4_loss(f, h0, 0.2 - eps, 1.1, g, steps)) / (2 * eps);
  CHECK(adj.dt1 == doctest::Approx(fd_t1).epsilon(1e-5));
  CHECK(adj.dt0 == doctest::Approx(fd_t0).epsilon(1e-5));
}

TEST_CASE("backward (final-value) horizons") {
  Rng rng(21);
  std::mt19937_64 r(22);
  VectorField f("f", 4, {8}, rng);
  const Tensor h0 = random_tensor({4}, r);
  const Tensor g = random_tensor({4}, r);
  const auto adj = grad_adjoint(h0, f, 1.0, -0.5, g, tight());
  CHECK(rel_err(adj.dtheta, fd_theta(f, h0, 1.0, -0.5, g, 200)) < 1e-4);
  CHECK(rel_err(adj.dh0, fd_h0(f, h0, 1.0, -0.5, g, 200)) < 1e-4);
}

TEST_CASE("empty horizon") {
  LinearField f(0.7);
  const Tensor g = Tensor::row({2.0});
  auto res = grad_adjoint(Tensor::row({1.0}), f, 0.4, 0.4, g, SolverConfig{});
  CHECK(res.dh0 == g);
  CHECK(res.dtheta[0] == 0.0);
}

TEST_CASE("grad_through_solver rejects adaptive methods") {
  LinearField f(1.0);
  CHECK_THROWS_AS(grad_through_solver(Tensor::row({1.0}), f, 0, 1, Tensor::row({1.0}), SolverConfig{}),
                  ContractViolation);
}

TEST_CASE("odeint on a tape matches the endpoint gradients") {
  Rng rng(31);
  std::mt19937_64 r(32);
  auto f = std::make_shared<VectorField>("f", 3, std::vector<std::size_t>{8}, rng);
  const Tensor h0 = random_tensor({2, 3}, r);
  const Tensor w = random_tensor({2, 3}, r);

  auto run = [&](GradMode mode, const SolverConfig& cfg) {
    Tape tape;
    Var h = tape.leaf(h0);
    Var out = odeint(tape, f, h, 0.0, 1.3, cfg, mode);
    Gradients grads = tape.backward(ops::sum(ops::mul(out, tape.constant(w))));
    return std::pair{tape.grad(h), flatten(grads, f->parameters())};
  };

  const auto [dh_adj, dth_adj] = run(GradMode::adjoint, tight());
  const auto [dh_bp, dth_bp] = run(GradMode::backprop, rk4(200));
  CHECK(rel_err(dh_adj, dh_bp) < 1e-5);
  CHECK(rel_err(dth_adj, dth_bp) < 1e-5);

  const auto ref = grad_adjoint(h0, *f, 0.0, 1.3, w, tight());
  CHECK(rel_err(dth_adj, ref.dtheta) < 1e-9);
  CHECK(rel_err(dh_adj, ref.dh0) < 1e-9);
}
