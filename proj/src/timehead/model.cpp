// SPDX-License-Identifier: Apache-2.0
#include "tahead/model.hpp"

#include <algorithm>
#include <cmath>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::node: return "node";
    case HeadKind::node_rnn: return "node_rnn";
    case HeadKind::node_gru: return "node_gru";
    case HeadKind::node_lstm: return "node_lstm";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "node") return HeadKind::node;
  if (s == "node_rnn") return HeadKind::node_rnn;
  if (s == "node_gru") return HeadKind::node_gru;
  if (s == "node_lstm") return HeadKind::node_lstm;
  throw ContractViolation("unknown head kind '" + s + "'");
}

std::optional<CellKind> cell_for(HeadKind k) {
  switch (k) {
    case HeadKind::node: return std::nullopt;
    case HeadKind::node_rnn: return CellKind::rnn;
    case HeadKind::node_gru: return CellKind::gru;
    case HeadKind::node_lstm: return CellKind::lstm;
  }
  return std::nullopt;
}

TimeAwareModel::TimeAwareModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  require(!cfg.encoder_widths.empty(), "encoder needs at least one layer width");
  std::vector<std::size_t> enc{cfg.obs_dim};
  enc.insert(enc.end(), cfg.encoder_widths.begin(), cfg.encoder_widths.end());
  encoder = DenseNet("encoder", enc, Activation::tanh, Activation::tanh, rng);
  projector = DenseNet("projector", {enc.back(), cfg.projector_hidden, cfg.latent_dim}, Activation::tanh,
                       Activation::identity, rng);
  field = VectorField("field", cfg.latent_dim, cfg.field_hidden, rng);
  if (auto ck = cell_for(cfg.head)) cell = RecurrentCell(*ck, "cell", cfg.latent_dim, cfg.latent_dim, rng);
  classifier = DenseNet("classifier", {cfg.latent_dim, kNumGrades}, Activation::identity, Activation::identity, rng);
}

Var TimeAwareModel::embed(Tape& tape, Var x) { return projector.forward(tape, encoder.forward(tape, x)); }

Tensor TimeAwareModel::embed(const Tensor& x) const { return projector.apply(encoder.apply(x)); }

std::vector<Parameter*> TimeAwareModel::backbone_parameters() {
  std::vector<Parameter*> out = encoder.parameters();
  for (auto* p : projector.parameters()) out.push_back(p);
  for (auto* p : field.parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> TimeAwareModel::parameters() {
  std::vector<Parameter*> out = backbone_parameters();
  if (cell)
    for (auto* p : cell->parameters()) out.push_back(p);
  for (auto* p : classifier.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> TimeAwareModel::parameters() const {
  std::vector<const Parameter*> out = encoder.parameters();
  for (auto* p : projector.parameters()) out.push_back(p);
  for (auto* p : field.net().parameters()) out.push_back(p);
  if (cell)
    for (auto* p : cell->parameters()) out.push_back(p);
  for (auto* p : classifier.parameters()) out.push_back(p);
  return out;
}

void SequenceBatch::validate() const {
  require(times.size() == steps() && active.size() == steps(), "SequenceBatch: per-step arrays disagree");
  for (std::size_t j = 0; j < steps(); ++j) {
    require(obs[j].rows() == batch, "SequenceBatch: obs rows != batch");
    require(times[j].size() == batch && active[j].size() == batch, "SequenceBatch: per-row arrays disagree");
  }
  for (std::size_t r = 0; r < batch; ++r) {
    bool started = false;
    double prev = 0.0;
    for (std::size_t j = 0; j < steps(); ++j) {
      if (!active[j][r]) {
        require(!started, "SequenceBatch: active steps must be contiguous and right-aligned");
        continue;
      }
      if (started) require(times[j][r] > prev, "SequenceBatch: visit times must be strictly increasing");
      started = true;
      prev = times[j][r];
    }
    require(started, "SequenceBatch: every row needs at least one visit");
  }
}

namespace {

std::shared_ptr<DifferentiableField> flow_for(VectorField& field, std::vector<double> start,
                                              std::vector<double> span) {
  return std::make_shared<BatchedFlow>(field, std::move(start), std::move(span));
}

Var mask_column(Tape& tape, const std::vector<unsigned char>& m) {
  Tensor t(Shape{m.size(), 1});
  for (std::size_t r = 0; r < m.size(); ++r) t[r] = m[r] ? 1.0 : 0.0;
  return tape.constant(std::move(t));
}

// h + m * (v - h)
Var blend(Var h, Var v, Var m) { return ops::add(h, ops::mul(ops::sub(v, h), m)); }

bool any(const std::vector<unsigned char>& m) {
  return std::any_of(m.begin(), m.end(), [](unsigned char v) { return v != 0; });
}

}  // namespace

Var predict_latent_rows(Tape& tape, VectorField& field, Var h, const std::vector<double>& from,
                        const std::vector<double>& to, const ForwardOptions& opts) {
  require(from.size() == to.size() && from.size() == h.value().rows(), "predict_latent_rows: size mismatch");
  std::vector<double> span(from.size());
  bool moving = false;
  for (std::size_t r = 0; r < span.size(); ++r) {
    span[r] = to[r] - from[r];
    moving = moving || span[r] != 0.0;
  }
  if (!moving) return h;
  return odeint(tape, flow_for(field, from, std::move(span)), h, 0.0, 1.0, opts.solver, opts.grad_mode);
}

Tensor predict_latent(const Tensor& h, double t_i, double t_target, VectorField& field, const SolverConfig& cfg) {
  require(h.all_finite(), "predict_latent: h must be finite");
  if (t_target == t_i) return h;
  return ode_solve(h, field.dynamics(), t_i, t_target, cfg).h_end;
}

RolloutResult ode_rnn_rollout(Tape& tape, TimeAwareModel& model, const SequenceBatch& seq,
                              const ForwardOptions& opts) {
  seq.validate();
  const std::size_t B = seq.batch;
  const std::size_t d = model.config().latent_dim;
  Var h = tape.constant(Tensor(Shape{B, d}));
  std::optional<Var> c;
  if (model.cell && model.cell->kind() == CellKind::lstm) c = tape.constant(Tensor(Shape{B, d}));

  std::vector<double> prev(B, 0.0);
  std::vector<unsigned char> started(B, 0);
  for (std::size_t j = 0; j < seq.steps(); ++j) {
    const auto& act = seq.active[j];
    std::vector<unsigned char> first(B, 0), update(B, 0);
    std::vector<double> target = prev;
    for (std::size_t r = 0; r < B; ++r) {
      if (!act[r]) continue;
      (started[r] ? update : first)[r] = 1;
      if (started[r]) target[r] = seq.times[j][r];
    }
    if (any(update)) h = predict_latent_rows(tape, model.field, h, prev, target, opts);

    Var y = model.embed(tape, tape.constant(seq.obs[j]));
    if (any(first)) {
      Var m = mask_column(tape, first);
      h = blend(h, y, m);
    }
    if (model.cell && any(update)) {
      Var m = mask_column(tape, update);
      CellState next = model.cell->step(tape, y, {h, c});
      h = blend(h, next.h, m);
      if (c) c = blend(*c, *next.c, m);
    }
    for (std::size_t r = 0; r < B; ++r) {
      if (!act[r]) continue;
      started[r] = 1;
      prev[r] = seq.times[j][r];
    }
  }
  return {h, prev};
}

Tensor ode_rnn_rollout(TimeAwareModel& model, const std::vector<std::pair<double, Tensor>>& visits,
                       const ForwardOptions& opts) {
  require(!visits.empty(), "ode_rnn_rollout: need at least one visit");
  SequenceBatch seq;
  seq.batch = 1;
  for (std::size_t j = 0; j < visits.size(); ++j) {
    if (j > 0 && !(visits[j].first > visits[j - 1].first))
      throw ContractViolation("ode_rnn_rollout: visit times must be strictly increasing");
    seq.obs.push_back(visits[j].second.reshaped(Shape{1, visits[j].second.numel()}));
    seq.times.push_back({visits[j].first});
    seq.active.push_back({1});
  }
  Tape tape;
  return ode_rnn_rollout(tape, model, seq, opts).h.value();
}

Var classify(Tape& tape, DenseNet& head, Var h) {
  require(head.out_dim() == kNumGrades, "classify: head must emit one logit per grade");
  return head.forward(tape, h);
}

Tensor tail_scores(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  require(cols == kNumGrades, "tail_scores: expected 5 logits per row");
  Tensor out(Shape{rows, 3});
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = logits[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, logits[r * cols + c]);
    std::vector<double> p(cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += p[c] = std::exp(logits[r * cols + c] - mx);
    // Tail sums from the top grade down keep P(>=k) monotone in k.
    double tail = 0.0;
    std::vector<double> tails(cols + 1, 0.0);
    for (std::size_t c = cols; c-- > 0;) tails[c] = tail += p[c] / s;
    for (std::size_t k = 1; k <= 3; ++k) out.at(r, k - 1) = std::min(1.0, tails[k]);
  }
  return out;
}

std::vector<int> argmax_grades(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (logits[r * cols + c] > logits[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace tahead
