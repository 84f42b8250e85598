// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "tahead/model.hpp"

namespace tahead {

/// SimCLR NT-Xent over 2N views: row i and row i+N form a positive pair, all
/// other 2N-1 rows are in the denominator. Mean over the 2N anchors.
Var nt_xent_loss(Var views, double temperature);

/// Mean over rows of ||n(pred) - n(target)||^2 with n = row-wise L2
/// normalisation. `target` is a constant: no gradient reaches it.
Var normalized_mse(Var pred, const Tensor& target);

/// Target network of the BYOL scheme. By default the encoder is shared with
/// the online network and only the projector has an EMA copy; with a
/// separate encoder the whole target tower is an EMA copy.
struct EmaPair {
  DenseNet projector;
  std::optional<DenseNet> encoder;
  double alpha = 0.99;

  std::vector<Parameter*> parameters();
};

EmaPair make_target(const TimeAwareModel& online, double alpha, bool separate_encoder);

/// Target projection g_xi(f(x)), never recorded on a tape.
Tensor target_embed(const EmaPair& target, const TimeAwareModel& online, const Tensor& x);

/// xi <- alpha xi + (1 - alpha) mu, elementwise. `alpha` in (0, 1]; 1 freezes
/// the target.
void ema_update(const std::vector<Parameter*>& target, const std::vector<const Parameter*>& online, double alpha);
void ema_update(EmaPair& target, const TimeAwareModel& online);

struct ByolLosses {
  Var forward;                  // IVP prediction of h(t_next) vs target
  std::optional<Var> backward;  // FVP prediction of h(t_i) vs target
  Var total;
};

/// Temporal-evolution (forward) and temporal-consistency (backward) losses
/// for a batch of pairs; x_i and x_next are [N, obs].
ByolLosses byol_losses(Tape& tape, TimeAwareModel& online, const EmaPair& target, const Tensor& x_i,
                       const Tensor& x_next, const std::vector<double>& t_i, const std::vector<double>& t_next,
                       bool with_tc, const ForwardOptions& opts);

}  // namespace tahead
