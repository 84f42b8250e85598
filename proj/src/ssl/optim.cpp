// SPDX-License-Identifier: Apache-2.0
#include "tahead/optim.hpp"

#include <cmath>
#include <numbers>

#include "tahead/errors.hpp"

namespace tahead {

AdamW::AdamW(std::vector<Parameter*> params, Options opts) : params_(std::move(params)), opts_(opts) {
  require(opts.weight_decay >= 0.0, "AdamW: weight decay must be >= 0");
  require(opts.beta1 >= 0.0 && opts.beta1 < 1.0 && opts.beta2 >= 0.0 && opts.beta2 < 1.0, "AdamW: betas in [0, 1)");
  state_.reserve(params_.size());
  for (auto* p : params_) state_.push_back({Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
}

void AdamW::step(const Gradients& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!grads.contains(p)) continue;
    const Tensor& g = grads.of(p);
    Tensor& m = state_[k].m;
    Tensor& v = state_[k].v;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      p.value[i] *= 1.0 - lr * opts_.weight_decay;
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
    }
  }
}

OneCycle::OneCycle(double peak_lr, long total_steps, double pct_start, double div, double final_div)
    : peak_(peak_lr), total_(total_steps), pct_(pct_start), div_(div), final_div_(final_div) {
  require(peak_lr >= 0.0 && std::isfinite(peak_lr), "OneCycle: peak lr must be finite and >= 0");
  require(total_steps >= 1, "OneCycle: need at least one step");
  require(pct_start > 0.0 && pct_start < 1.0, "OneCycle: pct_start in (0, 1)");
}

double OneCycle::lr(long step) const {
  const double start = peak_ / div_;
  const double end = start / final_div_;
  const double warm = std::max(1.0, pct_ * static_cast<double>(total_));
  const double s = static_cast<double>(std::clamp(step, 0L, total_ - 1));
  if (s < warm) return start + (peak_ - start) * (s / warm);
  const double rest = std::max(1.0, static_cast<double>(total_ - 1) - warm);
  const double frac = std::min(1.0, (s - warm) / rest);
  return end + 0.5 * (peak_ - end) * (1.0 + std::cos(std::numbers::pi * frac));
}

double grad_norm(const Gradients& grads, const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (auto* p : params) {
    if (!grads.contains(*p)) continue;
    const Tensor g = grads.of(*p);
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace tahead
