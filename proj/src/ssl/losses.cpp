// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"
#include "tahead/ssl.hpp"

namespace tahead {

Var nt_xent_loss(Var views, double temperature) {
  require(temperature > 0.0 && std::isfinite(temperature), "nt_xent_loss: temperature must be positive");
  const std::size_t two_n = views.value().rows();
  require(two_n >= 4 && two_n % 2 == 0, "nt_xent_loss: need 2N views with N >= 2");
  const std::size_t n = two_n / 2;

  Var z = ops::l2_normalize(views);
  Var logits = ops::scale(ops::matmul(z, ops::transpose(z)), 1.0 / temperature);
  std::vector<unsigned char> mask(two_n * two_n, 1);
  for (std::size_t i = 0; i < two_n; ++i) mask[i * two_n + i] = 0;
  std::vector<std::size_t> positive(two_n);
  for (std::size_t i = 0; i < two_n; ++i) positive[i] = i < n ? i + n : i - n;
  return ops::scale(ops::mean(ops::gather(ops::log_softmax(logits, mask), positive)), -1.0);
}

Var normalized_mse(Var pred, const Tensor& target) {
  require(pred.value().shape() == target.shape(), "normalized_mse: prediction/target shape mismatch");
  Tape& tape = *pred.tape;
  Var tn = ops::l2_normalize(tape.constant(target));
  Var diff = ops::sub(ops::l2_normalize(pred), tn);
  return ops::scale(ops::sum(ops::mul(diff, diff)), 1.0 / static_cast<double>(pred.value().rows()));
}

std::vector<Parameter*> EmaPair::parameters() {
  std::vector<Parameter*> out;
  if (encoder)
    for (auto* p : encoder->parameters()) out.push_back(p);
  for (auto* p : projector.parameters()) out.push_back(p);
  return out;
}

namespace {

DenseNet renamed_copy(const DenseNet& net, const std::string& prefix) {
  DenseNet copy = net;
  for (auto* p : copy.parameters()) p->name = prefix + p->name;
  return copy;
}

}  // namespace

EmaPair make_target(const TimeAwareModel& online, double alpha, bool separate_encoder) {
  require(alpha > 0.0 && alpha <= 1.0, "EMA alpha must be in (0, 1]");
  EmaPair out;
  out.alpha = alpha;
  out.projector = renamed_copy(online.projector, "target.");
  if (separate_encoder) out.encoder = renamed_copy(online.encoder, "target.");
  return out;
}

Tensor target_embed(const EmaPair& target, const TimeAwareModel& online, const Tensor& x) {
  const DenseNet& enc = target.encoder ? *target.encoder : online.encoder;
  return target.projector.apply(enc.apply(x));
}

void ema_update(const std::vector<Parameter*>& target, const std::vector<const Parameter*>& online, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, "ema_update: alpha must be in (0, 1]");
  require(target.size() == online.size(), "ema_update: parameter lists differ in length");
  for (std::size_t k = 0; k < target.size(); ++k) {
    Tensor& xi = target[k]->value;
    const Tensor& mu = online[k]->value;
    require(xi.shape() == mu.shape(), "ema_update: shape mismatch for " + target[k]->name);
    for (std::size_t i = 0; i < xi.numel(); ++i) xi[i] = alpha * xi[i] + (1.0 - alpha) * mu[i];
  }
}

void ema_update(EmaPair& target, const TimeAwareModel& online) {
  std::vector<const Parameter*> mu;
  if (target.encoder)
    for (auto* p : online.encoder.parameters()) mu.push_back(p);
  for (auto* p : online.projector.parameters()) mu.push_back(p);
  ema_update(target.parameters(), mu, target.alpha);
}

ByolLosses byol_losses(Tape& tape, TimeAwareModel& online, const EmaPair& target, const Tensor& x_i,
                       const Tensor& x_next, const std::vector<double>& t_i, const std::vector<double>& t_next,
                       bool with_tc, const ForwardOptions& opts) {
  require(x_i.rows() == x_next.rows() && t_i.size() == x_i.rows() && t_next.size() == x_i.rows(),
          "byol_losses: batch sizes disagree");
  ByolLosses out;
  Var h_i = online.embed(tape, tape.constant(x_i));
  Var pred_next = predict_latent_rows(tape, online.field, h_i, t_i, t_next, opts);
  out.forward = normalized_mse(pred_next, target_embed(target, online, x_next));
  out.total = out.forward;
  if (with_tc) {
    Var h_next = online.embed(tape, tape.constant(x_next));
    Var pred_i = predict_latent_rows(tape, online.field, h_next, t_next, t_i, opts);
    out.backward = normalized_mse(pred_i, target_embed(target, online, x_i));
    out.total = ops::add(out.forward, *out.backward);
  }
  return out;
}

}  // namespace tahead
