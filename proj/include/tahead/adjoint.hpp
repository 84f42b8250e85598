// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "tahead/ode.hpp"
#include "tahead/tape.hpp"

namespace tahead {

/// A vector field u(t, h; theta) that can be evaluated, recorded on a tape
/// and pulled back through.
class DifferentiableField {
 public:
  virtual ~DifferentiableField() = default;

  virtual Tensor eval(double t, const Tensor& h) const = 0;
  /// Record u(t, h) on `tape`, registering the field's parameters there.
  virtual Var record(Tape& tape, double t, Var h) = 0;
  virtual std::vector<Parameter*> parameters() = 0;

  std::size_t param_count();

  struct Vjp {
    Tensor f;                    // u(t, h)
    Tensor dh;                   // a^T du/dh
    std::vector<double> dtheta;  // a^T du/dtheta, flattened in parameters() order
  };
  /// Vector-Jacobian products through a throwaway tape over `record`.
  virtual Vjp vjp(double t, const Tensor& h, const Tensor& a);

  Dynamics dynamics() const;
};

/// Flattened concatenation of per-parameter tensors, in `params` order.
std::vector<double> flatten(const Gradients& grads, const std::vector<Parameter*>& params);

struct EndpointGradients {
  Tensor dh0;
  std::vector<double> dtheta;
  double dt0 = 0.0;
  double dt1 = 0.0;
};

/// Gradients of L(h(t1)) by integrating the augmented adjoint system
/// (h, a, g) backwards from t1 to t0 with da/dt = -a^T du/dh and
/// dg/dt = -a^T du/dtheta. dopri5 runs at 10x tighter tolerances than `cfg`.
/// `h_end` may be passed when the forward solve has already been done.
EndpointGradients grad_adjoint(const Tensor& h0, DifferentiableField& field, double t0, double t1,
                               const Tensor& dL_dh_end, const SolverConfig& cfg,
                               std::optional<Tensor> h_end = std::nullopt);

/// Exact gradient of the discretised map: the rk4 solve is recorded on a tape
/// and differentiated. Only defined for SolverMethod::rk4.
EndpointGradients grad_through_solver(const Tensor& h0, DifferentiableField& field, double t0, double t1,
                                      const Tensor& dL_dh_end, const SolverConfig& cfg);

enum class GradMode { adjoint, backprop };

/// ODE solve as a tape op. In adjoint mode the forward pass runs untaped and
/// the backward pass calls grad_adjoint; in backprop mode every rk4 stage is
/// recorded (requires SolverMethod::rk4). The tape keeps `field` alive until
/// its backward pass has run.
Var odeint(Tape& tape, std::shared_ptr<DifferentiableField> field, Var h0, double t0, double t1, const SolverConfig& cfg,
           GradMode mode);

}  // namespace tahead
