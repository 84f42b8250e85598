// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tahead/delta.hpp"
#include "tahead/pairs.hpp"
#include "tahead/ssl.hpp"
#include "tahead/training.hpp"

namespace tahead {

enum class Scheme { simclr_dpa, byol_tetc };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct PretrainConfig {
  Scheme scheme = Scheme::byol_tetc;
  long epochs = 40;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double temperature = 0.5;
  double ema_alpha = 0.99;
  bool separate_target_encoder = false;
  bool with_tc = true;
  DeltaConfig delta;
  ForwardOptions forward;
  std::uint64_t seed = 0;
  /// Round weights to float after every update (32-bit storage mode).
  bool round_f32 = false;

  void validate() const;
};

struct PretrainResult {
  std::vector<LossRow> curve;
  StabilityReport stability;
  long delta_clamps = 0;
  long aligned_draws = 0;
  long fixed_draws = 0;
  long unaligned_draws = 0;
};

struct BatchLoss {
  Var total;
  std::optional<Var> forward;
  std::optional<Var> backward;
  std::vector<DeltaAug> augs;  // simclr only
  long clamps = 0;
};

/// Loss of one mini-batch under `cfg.scheme`. `target` is required for
/// byol_tetc and ignored otherwise; `delta_rng` feeds the delta draws.
BatchLoss ssl_batch_loss(Tape& tape, TimeAwareModel& model, const EmaPair* target, const std::vector<VisitPair>& pairs,
                         const std::vector<std::size_t>& rows, const PretrainConfig& cfg, Rng& delta_rng);

/// Stream seed for the delta draws of global step `step`.
Rng delta_rng_for(const PretrainConfig& cfg, long step);

/// Self-supervised pre-training of the encoder, projector and field of
/// `model` on the pair set. Rows are passed to `sink` as they are produced.
/// Throws TrainingDivergence on the first non-finite loss, gradient or solve.
PretrainResult pretrain(TimeAwareModel& model, const std::vector<VisitPair>& pairs, const PretrainConfig& cfg,
                        const LossSink& sink = {});

}  // namespace tahead
