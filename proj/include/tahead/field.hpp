// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tahead/adjoint.hpp"
#include "tahead/dense.hpp"

namespace tahead {

/// Neural dynamics u(t, h; theta) = net([h, t]). Time is appended to the
/// latent as one extra input feature. Accepts a single latent [d] or a batch
/// [B, d]; every row sees the same t.
class VectorField : public DifferentiableField {
 public:
  VectorField() = default;
  VectorField(const std::string& name, std::size_t latent_dim, const std::vector<std::size_t>& hidden, Rng& rng);
  explicit VectorField(DenseNet net);

  Tensor eval(double t, const Tensor& h) const override;
  Var record(Tape& tape, double t, Var h) override;
  std::vector<Parameter*> parameters() override { return net_.parameters(); }

  /// Row r sees time t_rows[r].
  Tensor eval_rows(const Tensor& h, const std::vector<double>& t_rows) const;
  Var record_rows(Tape& tape, Var h, const std::vector<double>& t_rows);

  std::size_t latent_dim() const noexcept { return net_.out_dim(); }
  DenseNet& net() noexcept { return net_; }
  const DenseNet& net() const noexcept { return net_; }

 private:
  DenseNet net_;
};

/// A batch of independent IVPs with per-row horizons, solved together.
///
/// Row r integrates from start[r] to start[r] + span[r]. Time is rescaled to
/// s in [0, 1] so that every row shares one solver clock:
///   dh_r/ds = span[r] * u(start[r] + s * span[r], h_r).
/// A zero span freezes that row; a negative span integrates backwards.
class BatchedFlow : public DifferentiableField {
 public:
  BatchedFlow(VectorField& field, std::vector<double> start, std::vector<double> span);

  Tensor eval(double s, const Tensor& h) const override;
  Var record(Tape& tape, double s, Var h) override;
  std::vector<Parameter*> parameters() override { return field_->parameters(); }

  bool all_frozen() const noexcept;

 private:
  std::vector<double> times_at(double s) const;

  VectorField* field_;
  std::vector<double> start_;
  std::vector<double> span_;
};

}  // namespace tahead
