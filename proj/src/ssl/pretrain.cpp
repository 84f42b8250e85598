// SPDX-License-Identifier: Apache-2.0
#include "tahead/pretrain.hpp"

#include <cmath>
#include <limits>

#include "tahead/checkpoint.hpp"
#include "tahead/errors.hpp"
#include "tahead/optim.hpp"
#include "tahead/rng.hpp"

namespace tahead {

std::string to_string(Scheme s) { return s == Scheme::simclr_dpa ? "simclr_dpa" : "byol_tetc"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "simclr_dpa") return Scheme::simclr_dpa;
  if (s == "byol_tetc") return Scheme::byol_tetc;
  throw ContractViolation("unknown pre-training scheme '" + s + "'");
}

void PretrainConfig::validate() const {
  require(epochs >= 0, "pretrain: epochs must be >= 0");
  require(batch_size >= 1, "pretrain: batch_size must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), "pretrain: lr must be finite and >= 0");
  require(weight_decay >= 0.0, "pretrain: weight_decay must be >= 0");
  require(temperature > 0.0, "pretrain: temperature must be > 0");
  require(ema_alpha > 0.0 && ema_alpha <= 1.0, "pretrain: ema_alpha must be in (0, 1]");
  if (scheme == Scheme::simclr_dpa) require(batch_size >= 2, "pretrain: simclr_dpa needs batch_size >= 2");
  delta.validate();
  forward.solver.validate();
}

Tensor stack_first(const std::vector<VisitPair>& pairs, const std::vector<std::size_t>& rows) {
  require(!rows.empty(), "stack_first: empty batch");
  const std::size_t d = pairs.at(rows[0]).x_i.numel();
  Tensor out(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& x = pairs.at(rows[r]).x_i;
    require(x.numel() == d, "stack_first: ragged observations");
    std::copy(x.data().begin(), x.data().end(), out.storage().begin() + static_cast<long>(r * d));
  }
  return out;
}

Tensor stack_next(const std::vector<VisitPair>& pairs, const std::vector<std::size_t>& rows) {
  require(!rows.empty(), "stack_next: empty batch");
  const std::size_t d = pairs.at(rows[0]).x_next.numel();
  Tensor out(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& x = pairs.at(rows[r]).x_next;
    require(x.numel() == d, "stack_next: ragged observations");
    std::copy(x.data().begin(), x.data().end(), out.storage().begin() + static_cast<long>(r * d));
  }
  return out;
}

Rng delta_rng_for(const PretrainConfig& cfg, long step) {
  return make_rng(cfg.seed, "delta", static_cast<std::uint64_t>(step));
}

BatchLoss ssl_batch_loss(Tape& tape, TimeAwareModel& model, const EmaPair* target, const std::vector<VisitPair>& pairs,
                         const std::vector<std::size_t>& rows, const PretrainConfig& cfg, Rng& delta_rng) {
  std::vector<double> t_i(rows.size()), t_next(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    t_i[r] = pairs.at(rows[r]).t_i;
    t_next[r] = pairs.at(rows[r]).t_next;
  }
  BatchLoss out;
  if (cfg.scheme == Scheme::simclr_dpa) {
    std::vector<DpaHorizons> horizons;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const VisitPair& p = pairs[rows[r]];
      out.augs.push_back(compute_delta(p.s_i, p.s_next, p.t_i, p.t_next, cfg.delta, delta_rng));
      horizons.push_back(dpa_horizons(p.t_i, p.gap(), out.augs.back()));
      out.clamps += horizons.back().clamped ? 1 : 0;
    }
    Var h = model.embed(tape, tape.constant(stack_first(pairs, rows)));
    out.total = nt_xent_loss(dpa_views(tape, model.field, h, t_i, horizons, cfg.forward), cfg.temperature);
    return out;
  }
  require(target != nullptr, "ssl_batch_loss: byol_tetc needs a target network");
  ByolLosses l = byol_losses(tape, model, *target, stack_first(pairs, rows), stack_next(pairs, rows), t_i, t_next,
                             cfg.with_tc, cfg.forward);
  out.total = l.total;
  out.forward = l.forward;
  out.backward = l.backward;
  return out;
}

PretrainResult pretrain(TimeAwareModel& model, const std::vector<VisitPair>& pairs, const PretrainConfig& cfg,
                        const LossSink& sink) {
  cfg.validate();
  require(!pairs.empty(), "pretrain: empty pair set");
  const std::size_t min_batch = cfg.scheme == Scheme::simclr_dpa ? 2 : 1;
  require(pairs.size() >= min_batch, "pretrain: not enough pairs for one batch");

  const long per_epoch = static_cast<long>(epoch_batches(pairs.size(), cfg.batch_size, cfg.seed, 1, min_batch).size());
  const OneCycle schedule(cfg.lr, std::max(1L, per_epoch * cfg.epochs));
  std::vector<Parameter*> params = model.backbone_parameters();
  AdamW opt(params, {.weight_decay = cfg.weight_decay});
  std::optional<EmaPair> target;
  if (cfg.scheme == Scheme::byol_tetc) target = make_target(model, cfg.ema_alpha, cfg.separate_target_encoder);

  PretrainResult res;
  long step = 0;
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(pairs.size(), cfg.batch_size, cfg.seed, epoch, min_batch)) {
      ++step;
      LossRow row;
      row.epoch = epoch;
      row.step = step;
      row.scheme = to_string(cfg.scheme);
      row.lr = schedule.lr(step - 1);
      auto emit_failure = [&] {
        row.loss = std::numeric_limits<double>::quiet_NaN();
        row.nan_flag = true;
        res.curve.push_back(row);
        if (sink) sink(row);
      };
      try {
        guarded_step(res.stability, epoch, step, [&] {
          Tape tape;
          Rng drng = delta_rng_for(cfg, step);
          BatchLoss bl = ssl_batch_loss(tape, model, target ? &*target : nullptr, pairs, rows, cfg, drng);
          for (const auto& a : bl.augs) {
            res.aligned_draws += a.mode == DeltaMode::aligned;
            res.fixed_draws += a.mode == DeltaMode::fixed;
            res.unaligned_draws += a.mode == DeltaMode::unaligned;
          }
          res.delta_clamps += bl.clamps;
          row.loss = bl.total.value().item();
          if (bl.forward) row.loss_forward = bl.forward->value().item();
          if (bl.backward) row.loss_backward = bl.backward->value().item();
          Gradients grads = tape.backward(bl.total);
          row.grad_norm = grad_norm(grads, params);
          if (!std::isfinite(row.grad_norm)) throw NonFiniteError("gradient norm is not finite");
          opt.step(grads, row.lr);
          for (auto* p : params) {
            if (cfg.round_f32) round_to_f32(p->value);
            if (!p->value.all_finite()) throw NonFiniteError("parameter " + p->name + " became non-finite");
          }
          if (target) ema_update(*target, model);
        });
      } catch (const TrainingDivergence&) {
        emit_failure();
        throw;
      }
      res.stability.steps = step;
      res.stability.max_grad_norm = std::max(res.stability.max_grad_norm, row.grad_norm);
      res.curve.push_back(row);
      if (sink) sink(row);
    }
  }
  return res;
}

}  // namespace tahead
