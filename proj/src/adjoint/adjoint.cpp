// SPDX-License-Identifier: Apache-2.0
#include "tahead/adjoint.hpp"

#include <sstream>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {

std::size_t DifferentiableField::param_count() {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.numel();
  return n;
}

DifferentiableField::Vjp DifferentiableField::vjp(double t, const Tensor& h, const Tensor& a) {
  Tape tape;
  Var hv = tape.leaf(h);
  Var out = record(tape, t, hv);
  Gradients grads = tape.backward(out, a);
  Vjp r;
  r.f = out.value();
  r.dh = tape.grad(hv);
  r.dtheta = flatten(grads, parameters());
  return r;
}

Dynamics DifferentiableField::dynamics() const {
  return [this](double t, const Tensor& h) { return eval(t, h); };
}

std::vector<double> flatten(const Gradients& grads, const std::vector<Parameter*>& params) {
  std::vector<double> out;
  for (const auto* p : params) {
    const Tensor g = grads.of(*p);
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

namespace {

Var record_rk4(Tape& tape, DifferentiableField& field, Var h, double t0, double t1, int steps) {
  const double dt = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * dt;
    Var k1 = field.record(tape, t, h);
    Var k2 = field.record(tape, t + 0.5 * dt, ops::add(h, ops::scale(k1, 0.5 * dt)));
    Var k3 = field.record(tape, t + 0.5 * dt, ops::add(h, ops::scale(k2, 0.5 * dt)));
    Var k4 = field.record(tape, t + dt, ops::add(h, ops::scale(k3, dt)));
    Var incr = ops::add(ops::add(k1, ops::scale(k2, 2.0)), ops::add(ops::scale(k3, 2.0), k4));
    h = ops::add(h, ops::scale(incr, dt / 6.0));
  }
  return h;
}

}  // namespace

EndpointGradients grad_adjoint(const Tensor& h0, DifferentiableField& field, double t0, double t1,
                               const Tensor& dL_dh_end, const SolverConfig& cfg, std::optional<Tensor> h_end) {
  cfg.validate();
  require(dL_dh_end.numel() == h0.numel(), "grad_adjoint: upstream gradient shape mismatch");
  require(dL_dh_end.all_finite(), "grad_adjoint: upstream gradient must be finite");
  const std::size_t n = h0.numel();
  const std::size_t np = field.param_count();

  EndpointGradients out;
  out.dtheta.assign(np, 0.0);
  if (t0 == t1) {
    out.dh0 = dL_dh_end.reshaped(h0.shape());
    return out;
  }

  if (!h_end) h_end = ode_solve(h0, field.dynamics(), t0, t1, cfg).h_end;

  out.dt1 = dot(dL_dh_end, field.eval(t1, *h_end));

  // Augmented state [h | a | g], flattened.
  Tensor z(Shape{2 * n + np});
  std::copy(h_end->data().begin(), h_end->data().end(), z.data().begin());
  std::copy(dL_dh_end.data().begin(), dL_dh_end.data().end(), z.data().begin() + n);

  const Shape hshape = h0.shape();
  Dynamics aug = [&field, n, np, &hshape](double t, const Tensor& state) {
    const auto d = state.data();
    Tensor h(hshape, std::vector<double>(d.begin(), d.begin() + n));
    Tensor a(hshape, std::vector<double>(d.begin() + n, d.begin() + 2 * n));
    auto v = field.vjp(t, h, a);
    Tensor dz(Shape{2 * n + np});
    auto o = dz.data();
    std::copy(v.f.data().begin(), v.f.data().end(), o.begin());
    for (std::size_t i = 0; i < n; ++i) o[n + i] = -v.dh[i];
    for (std::size_t i = 0; i < np; ++i) o[2 * n + i] = -v.dtheta[i];
    return dz;
  };

  SolverConfig back = cfg;
  back.rtol = cfg.rtol / 10.0;
  back.atol = cfg.atol / 10.0;
  SolveResult res;
  try {
    res = ode_solve(z, aug, t1, t0, back);
  } catch (const std::runtime_error& e) {
    std::ostringstream os;
    os << "adjoint solve over [" << t1 << " -> " << t0 << "] failed: " << e.what();
    throw SolverInstability(os.str());
  }

  const auto d = res.h_end.data();
  out.dh0 = Tensor(hshape, std::vector<double>(d.begin() + n, d.begin() + 2 * n));
  out.dtheta.assign(d.begin() + 2 * n, d.end());
  out.dt0 = -dot(out.dh0, field.eval(t0, h0));
  return out;
}

EndpointGradients grad_through_solver(const Tensor& h0, DifferentiableField& field, double t0, double t1,
                                      const Tensor& dL_dh_end, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.method != SolverMethod::rk4)
    throw ContractViolation("grad_through_solver is only defined for fixed-step rk4");
  require(dL_dh_end.numel() == h0.numel(), "grad_through_solver: upstream gradient shape mismatch");

  EndpointGradients out;
  if (t0 == t1) {
    out.dh0 = dL_dh_end.reshaped(h0.shape());
    out.dtheta.assign(field.param_count(), 0.0);
    return out;
  }
  Tape tape;
  Var h = tape.leaf(h0);
  Var h_end = record_rk4(tape, field, h, t0, t1, cfg.fixed_step_count);
  Gradients grads = tape.backward(h_end, dL_dh_end);
  out.dh0 = tape.grad(h);
  out.dtheta = flatten(grads, field.parameters());
  out.dt1 = dot(dL_dh_end, field.eval(t1, h_end.value()));
  out.dt0 = -dot(out.dh0, field.eval(t0, h0));
  return out;
}

Var odeint(Tape& tape, std::shared_ptr<DifferentiableField> fieldp, Var h0, double t0, double t1,
           const SolverConfig& cfg, GradMode mode) {
  DifferentiableField& field = *fieldp;
  cfg.validate();
  if (mode == GradMode::backprop) {
    if (cfg.method != SolverMethod::rk4) throw ContractViolation("backprop through the solver requires rk4");
    if (t0 == t1) return h0;
    return record_rk4(tape, field, h0, t0, t1, cfg.fixed_step_count);
  }

  Tensor h_end = ode_solve(h0.value(), field.dynamics(), t0, t1, cfg).h_end;
  std::vector<int> parents{h0.id};
  std::vector<Parameter*> params = field.parameters();
  for (auto* p : params) parents.push_back(tape.param(*p).id);

  const int ih0 = h0.id;
  return tape.record("odeint", h_end, parents,
                     [fp = std::move(fieldp), ih0, parents, params, t0, t1, cfg](Tape& t, int self) {
                       const Tensor& g = t.grad_of(self);
                       auto r = grad_adjoint(t.value(ih0), *fp, t0, t1, g, cfg, t.value(self));
                       if (t.requires_grad(ih0)) axpy(1.0, r.dh0, t.grad_ref(ih0));
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < params.size(); ++k) {
                         Tensor& gp = t.grad_ref(parents[k + 1]);
                         for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += r.dtheta[off + i];
                         off += gp.numel();
                       }
                     });
}

}  // namespace tahead
