// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unordered_map>
#include <vector>

#include "tahead/tape.hpp"

namespace tahead {

/// Adam with decoupled weight decay: p <- p (1 - lr wd), then the usual
/// bias-corrected Adam step.
class AdamW {
 public:
  struct Options {
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW() = default;
  AdamW(std::vector<Parameter*> params, Options opts);

  void step(const Gradients& grads, double lr);
  long steps_taken() const noexcept { return t_; }
  const std::vector<Parameter*>& params() const noexcept { return params_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::vector<Parameter*> params_;
  std::vector<Moments> state_;
  Options opts_;
  long t_ = 0;
};

/// One-cycle learning rate: linear warmup from peak/div over the first
/// `pct_start` of the steps, then cosine decay to peak/(div * final_div).
class OneCycle {
 public:
  OneCycle(double peak_lr, long total_steps, double pct_start = 0.3, double div = 25.0, double final_div = 1e4);

  double lr(long step) const;
  long total_steps() const noexcept { return total_; }

 private:
  double peak_;
  long total_;
  double pct_;
  double div_;
  double final_div_;
};

/// Global L2 norm over every gradient tensor.
double grad_norm(const Gradients& grads, const std::vector<Parameter*>& params);

}  // namespace tahead
