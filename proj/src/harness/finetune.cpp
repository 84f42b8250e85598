// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "tahead/errors.hpp"
#include "tahead/harness.hpp"
#include "tahead/ops.hpp"
#include "tahead/optim.hpp"
#include "tahead/rng.hpp"

namespace tahead {

Dataset prepare_data(const ExperimentConfig& cfg) {
  Dataset d;
  if (cfg.cohort_path) {
    d.cohort = load_cohort(*cfg.cohort_path);
    for (const auto& tr : d.cohort)
      for (const auto& v : tr.visits)
        if (v.x.numel() != cfg.cohort.obs_dim)
          throw ConfigError("cohort file " + cfg.cohort_path->string() + " has observations of width " +
                            std::to_string(v.x.numel()) + ", config says " + std::to_string(cfg.cohort.obs_dim));
  } else {
    d.cohort = generate_cohort(cfg.cohort, cfg.data_seed());
  }
  d.split = split_patients(d.cohort, derive_seed(cfg.data_seed(), "split"));
  return d;
}

TimeAwareModel init_model(const ExperimentConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.obs_dim = cfg.cohort.obs_dim;
  Rng rng = make_rng(cfg.seed, "init");
  TimeAwareModel model(mc, rng);
  if (cfg.precision == Precision::f32)
    for (auto* p : model.parameters()) round_to_f32(p->value);
  return model;
}

Var example_logits(Tape& tape, TimeAwareModel& model, const std::vector<LabeledExample>& examples,
                   const std::vector<std::size_t>& rows, const ForwardOptions& opts) {
  require(!rows.empty(), "example_logits: empty batch");
  const bool whole_history = model.cell.has_value();
  auto first_visit = [&](const LabeledExample& e) { return whole_history ? std::size_t{0} : e.history.size() - 1; };

  std::size_t steps = 0;
  for (auto r : rows) {
    const auto& e = examples.at(r);
    require(!e.history.empty(), "example_logits: example without history");
    steps = std::max(steps, e.history.size() - first_visit(e));
  }
  const std::size_t d = examples[rows[0]].history[0].second.numel();
  SequenceBatch seq;
  seq.batch = rows.size();
  for (std::size_t j = 0; j < steps; ++j) {
    seq.obs.emplace_back(Shape{rows.size(), d}, 0.0);
    seq.times.emplace_back(rows.size(), 0.0);
    seq.active.emplace_back(rows.size(), 0);
  }
  std::vector<double> target(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& e = examples[rows[b]];
    const std::size_t first = first_visit(e);
    const std::size_t offset = steps - (e.history.size() - first);
    for (std::size_t v = first; v < e.history.size(); ++v) {
      const std::size_t j = offset + (v - first);
      const Tensor& x = e.history[v].second;
      require(x.numel() == d, "example_logits: ragged observations");
      std::copy(x.data().begin(), x.data().end(), seq.obs[j].storage().begin() + static_cast<long>(b * d));
      seq.times[j][b] = e.history[v].first;
      seq.active[j][b] = 1;
    }
    target[b] = e.target_time;
  }
  RolloutResult roll = ode_rnn_rollout(tape, model, seq, opts);
  Var h = predict_latent_rows(tape, model.field, roll.h, roll.last_time, target, opts);
  return classify(tape, model.classifier, h);
}

namespace {

Var cross_entropy(Var logits, const std::vector<LabeledExample>& examples, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> labels(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) labels[b] = static_cast<std::size_t>(examples[rows[b]].target_grade);
  return ops::scale(ops::mean(ops::gather(ops::log_softmax(logits), labels)), -1.0);
}

}  // namespace

EvalResult evaluate(TimeAwareModel& model, const std::vector<LabeledExample>& examples, const ForwardOptions& opts,
                    std::size_t chunk) {
  require(!examples.empty(), "evaluate: empty split");
  require(chunk >= 1, "evaluate: chunk must be >= 1");
  const std::size_t n = examples.size();
  Tensor tail(Shape{n, 3});
  std::vector<int> pred(n), truth(n);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) rows.push_back(i);
    Tape tape;
    Var logits = example_logits(tape, model, examples, rows, opts);
    const Tensor& lv = logits.value();
    if (!lv.all_finite()) throw NonFiniteError("evaluation produced non-finite logits");
    loss_sum += cross_entropy(logits, examples, rows).value().item() * static_cast<double>(rows.size());
    const Tensor t = tail_scores(lv);
    const std::vector<int> g = argmax_grades(lv);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      for (std::size_t k = 0; k < 3; ++k) tail.at(rows[b], k) = t.at(b, k);
      pred[rows[b]] = g[b];
      truth[rows[b]] = examples[rows[b]].target_grade;
    }
  }
  EvalResult out;
  out.metrics = evaluate_predictions(tail, pred, truth);
  out.loss = loss_sum / static_cast<double>(n);
  out.examples = n;
  return out;
}

std::optional<double> selection_score(const EvalResult& r, SelectMetric m) {
  switch (m) {
    case SelectMetric::kappa: return r.metrics.kappa;
    case SelectMetric::auc1: return r.metrics.auc1;
    case SelectMetric::auc2: return r.metrics.auc2;
    case SelectMetric::auc3: return r.metrics.auc3;
    case SelectMetric::loss: return -r.loss;
  }
  return std::nullopt;
}

FinetuneResult finetune(TimeAwareModel& model, const TaskSplits& data, const ExperimentConfig& cfg,
                        const LossSink& sink) {
  const FinetuneConfig& fc = cfg.finetune;
  fc.validate();
  require(!data.train.empty() && !data.val.empty(), "finetune: train and val splits must be non-empty");
  const std::uint64_t order_seed = derive_seed(cfg.seed, "finetune");
  const std::size_t n = data.train.size();
  const long per_epoch = static_cast<long>(epoch_batches(n, fc.batch_size, order_seed, 1).size());
  const OneCycle schedule(fc.lr, std::max(1L, per_epoch * fc.epochs));
  std::vector<Parameter*> params = model.parameters();
  AdamW opt(params, {.weight_decay = fc.weight_decay});

  FinetuneResult res;
  std::vector<Tensor> best;
  std::optional<double> best_score;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(p->value);
  };
  auto validate_epoch = [&](long epoch) {
    EpochEval ev;
    ev.epoch = epoch;
    ev.val = evaluate(model, data.val, cfg.forward, fc.eval_batch);
    ev.score = selection_score(ev.val, fc.select);
    // Strict improvement keeps the earliest of equally good epochs.
    if (ev.score && (!best_score || *ev.score > *best_score)) {
      best_score = ev.score;
      res.best_epoch = epoch;
      snapshot();
    }
    res.history.push_back(ev);
  };

  snapshot();
  guarded_step(res.stability, 0, 0, [&] { validate_epoch(0); });
  long step = 0;
  for (long epoch = 1; epoch <= fc.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(n, fc.batch_size, order_seed, epoch)) {
      ++step;
      LossRow row;
      row.epoch = epoch;
      row.step = step;
      row.scheme = "finetune";
      row.lr = schedule.lr(step - 1);
      try {
        guarded_step(res.stability, epoch, step, [&] {
          Tape tape;
          Var loss = cross_entropy(example_logits(tape, model, data.train, rows, cfg.forward), data.train, rows);
          row.loss = loss.value().item();
          if (!std::isfinite(row.loss)) throw NonFiniteError("fine-tuning loss is not finite");
          Gradients grads = tape.backward(loss);
          row.grad_norm = grad_norm(grads, params);
          if (!std::isfinite(row.grad_norm)) throw NonFiniteError("gradient norm is not finite");
          opt.step(grads, row.lr);
          for (auto* p : params) {
            if (cfg.precision == Precision::f32) round_to_f32(p->value);
            if (!p->value.all_finite()) throw NonFiniteError("parameter " + p->name + " became non-finite");
          }
        });
      } catch (const TrainingDivergence&) {
        row.loss = std::numeric_limits<double>::quiet_NaN();
        row.nan_flag = true;
        res.curve.push_back(row);
        if (sink) sink(row);
        throw;
      }
      res.stability.steps = step;
      res.stability.max_grad_norm = std::max(res.stability.max_grad_norm, row.grad_norm);
      res.curve.push_back(row);
      if (sink) sink(row);
    }
    guarded_step(res.stability, epoch, step, [&] { validate_epoch(epoch); });
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return res;
}

}  // namespace tahead
