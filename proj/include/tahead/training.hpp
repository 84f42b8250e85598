// SPDX-License-Identifier: Apache-2.0
// Shared plumbing for the pre-training and fine-tuning loops.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tahead {

/// One optimisation step as emitted to the loss curve.
struct LossRow {
  long epoch = 0;  // 1-based
  long step = 0;   // global, 1-based
  std::string scheme;
  double loss = 0.0;
  std::optional<double> loss_forward;
  std::optional<double> loss_backward;
  double grad_norm = 0.0;
  double lr = 0.0;
  bool nan_flag = false;
};

using LossSink = std::function<void(const LossRow&)>;

struct StabilityReport {
  long nan_events = 0;
  double max_grad_norm = 0.0;
  long steps = 0;
  bool diverged = false;
  long divergence_epoch = 0;
  long divergence_step = 0;
  std::string divergence_kind;
  std::string message;
};

/// Shuffled mini-batches for one epoch, derived from (seed, epoch) only.
/// Trailing batches smaller than `min_batch` are dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    long epoch, std::size_t min_batch = 1);

/// Run one training step. Numerical failures (non-finite values, solver
/// blow-up, non-finite gradients) are recorded in `report` and rethrown as
/// TrainingDivergence carrying epoch, step and a failure kind.
void guarded_step(StabilityReport& report, long epoch, long step, const std::function<void()>& body);

}  // namespace tahead
