// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>

#include "tahead/errors.hpp"
#include "tahead/harness.hpp"

namespace tahead {

using nlohmann::ordered_json;

namespace {

ordered_json opt_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json stability_tree(const StabilityReport& r) {
  ordered_json j;
  j["nan_events"] = r.nan_events;
  j["max_grad_norm"] = finite_or_null(r.max_grad_norm);
  j["steps"] = r.steps;
  j["diverged"] = r.diverged;
  if (r.diverged) {
    j["divergence_epoch"] = r.divergence_epoch;
    j["divergence_step"] = r.divergence_step;
    j["divergence_kind"] = r.divergence_kind;
    j["message"] = r.message;
  }
  return j;
}

ordered_json metric_tree(const MetricSet& m) {
  ordered_json j = ordered_json::object();
  for (const auto& c : MetricTable::columns())
    if (auto v = m.get(c)) j[c] = *v;
  j["undefined"] = m.undefined;
  return j;
}

ordered_json eval_tree(const EvalResult& r) {
  ordered_json j = metric_tree(r.metrics);
  j["loss"] = r.loss;
  j["examples"] = r.examples;
  return j;
}

void write_record(const RunRecord& rec) {
  ordered_json j;
  j["kind"] = rec.kind;
  j["method"] = rec.method;
  j["weights"] = rec.weights;
  j["task"] = rec.task;
  j["config_hash"] = rec.config_hash;
  j["checkpoint"] = rec.paths.checkpoint().string();
  j["checkpoint_digest"] = rec.checkpoint_digest ? ordered_json(*rec.checkpoint_digest) : ordered_json(nullptr);
  j["loss_curve"] = rec.paths.loss_curve().string();
  j["metrics"] = rec.metrics ? metric_tree(*rec.metrics) : ordered_json(nullptr);
  j["stability"] = stability_tree(rec.stability);
  if (!rec.error.empty()) j["error"] = rec.error;
  write_text(rec.paths.record(), j.dump(2) + "\n");
  write_text(rec.paths.stability(), j["stability"].dump(2) + "\n");
}

/// Streams loss rows to disk as they arrive and tracks what the stability
/// report needs if training throws before returning its own report.
class CurveWriter {
 public:
  explicit CurveWriter(const std::filesystem::path& path) : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
  }
  void operator()(const LossRow& row) {
    os_ << loss_row_json(row) << '\n';
    os_.flush();
    if (!row.nan_flag) {
      steps_ = row.step;
      max_grad_ = std::max(max_grad_, row.grad_norm);
    }
  }
  StabilityReport failure_report(const TrainingDivergence& e) const {
    StabilityReport r;
    r.diverged = true;
    r.nan_events = e.kind() == "non_finite" ? 1 : 0;
    r.divergence_epoch = e.epoch();
    r.divergence_step = e.step();
    r.divergence_kind = e.kind();
    r.message = e.what();
    r.steps = steps_;
    r.max_grad_norm = max_grad_;
    return r;
  }

 private:
  std::ofstream os_;
  long steps_ = 0;
  double max_grad_ = 0.0;
};

RunRecord start_run(const ExperimentConfig& cfg, const std::string& kind, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentConfig snapshot = cfg;
  snapshot.output_dir = out_dir;
  RunRecord rec;
  rec.kind = kind;
  rec.method = to_string(cfg.model.head);
  rec.task = cfg.finetune.task.name();
  rec.config_hash = config_hash(cfg);
  rec.paths.dir = out_dir;
  write_text(rec.paths.config(), config_to_json(snapshot) + "\n");
  return rec;
}

std::vector<const Parameter*> const_params(const std::vector<Parameter*>& ps) { return {ps.begin(), ps.end()}; }

/// Load a checkpoint into a fresh model; the backbone must be present,
/// head tensors are taken when available.
void load_weights(TimeAwareModel& model, const std::filesystem::path& checkpoint, Precision precision) {
  const auto loaded = checkpoint_load_into(checkpoint, model.parameters(), false);
  std::vector<std::string> missing;
  for (const auto* p : model.backbone_parameters())
    if (std::find(loaded.begin(), loaded.end(), p->name) == loaded.end()) missing.push_back(p->name);
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw CheckpointError("checkpoint " + checkpoint.string() + " lacks backbone tensors: " + names);
  }
  if (precision == Precision::f32)
    for (auto* p : model.parameters()) round_to_f32(p->value);
}

}  // namespace

std::string loss_row_json(const LossRow& row) {
  ordered_json j;
  j["epoch"] = row.epoch;
  j["step"] = row.step;
  j["scheme"] = row.scheme;
  j["loss"] = finite_or_null(row.loss);
  if (row.loss_forward) j["loss_forward"] = finite_or_null(*row.loss_forward);
  if (row.loss_backward) j["loss_backward"] = finite_or_null(*row.loss_backward);
  j["grad_norm"] = finite_or_null(row.grad_norm);
  j["lr"] = row.lr;
  j["nan_flag"] = row.nan_flag;
  return j.dump();
}

std::string stability_json(const StabilityReport& r) { return stability_tree(r).dump(2); }

std::string metric_set_json(const MetricSet& m) { return metric_tree(m).dump(2); }

MetricSet metric_set_from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  MetricSet m;
  auto read = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<double>();
  };
  read("kappa", m.kappa);
  read("AUC1", m.auc1);
  read("AUC2", m.auc2);
  read("AUC3", m.auc3);
  if (j.contains("undefined")) m.undefined = j["undefined"].get<std::vector<std::string>>();
  return m;
}

RunRecord run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunRecord rec = start_run(cfg, "pretrain", out_dir);
  rec.weights = to_string(cfg.pretrain.scheme);
  const Dataset data = prepare_data(cfg);
  const std::vector<VisitPair> pairs = build_pairs(data.cohort, data.split.train);
  TimeAwareModel model = init_model(cfg);
  CurveWriter curve(rec.paths.loss_curve());
  PretrainResult res;
  try {
    res = pretrain(model, pairs, cfg.resolved_pretrain(), std::ref(curve));
  } catch (const TrainingDivergence& e) {
    rec.stability = curve.failure_report(e);
    rec.error = e.what();
    write_record(rec);
    throw;
  }
  rec.stability = res.stability;
  checkpoint_save(rec.paths.checkpoint(), const_params(model.backbone_parameters()), cfg.precision);
  rec.checkpoint_digest = checkpoint_digest(rec.paths.checkpoint());
  write_record(rec);
  ordered_json draws = {{"aligned", res.aligned_draws},
                        {"fixed", res.fixed_draws},
                        {"unaligned", res.unaligned_draws},
                        {"clamped", res.delta_clamps}};
  write_text(rec.paths.dir / "delta_draws.json", draws.dump(2) + "\n");
  return rec;
}

RunRecord run_finetune(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& pretrained,
                       const std::filesystem::path& out_dir) {
  RunRecord rec = start_run(cfg, "finetune", out_dir);
  rec.weights = pretrained ? to_string(cfg.pretrain.scheme) : "scratch";
  const Dataset data = prepare_data(cfg);
  const TaskSplits splits = task_splits(data.cohort, cfg.finetune.task, data.split);
  TimeAwareModel model = init_model(cfg);
  if (pretrained) load_weights(model, *pretrained, cfg.precision);

  CurveWriter curve(rec.paths.loss_curve());
  FinetuneResult res;
  try {
    res = finetune(model, splits, cfg, std::ref(curve));
  } catch (const TrainingDivergence& e) {
    rec.stability = curve.failure_report(e);
    rec.error = e.what();
    write_record(rec);
    throw;
  }
  rec.stability = res.stability;
  checkpoint_save(rec.paths.checkpoint(), const_params(model.parameters()), cfg.precision);
  rec.checkpoint_digest = checkpoint_digest(rec.paths.checkpoint());

  EvalResult test;
  try {
    test = evaluate(model, splits.test, cfg.forward, cfg.finetune.eval_batch);
  } catch (const NonFiniteError& e) {
    rec.stability.diverged = true;
    rec.stability.nan_events += 1;
    rec.stability.divergence_epoch = res.best_epoch;
    rec.stability.divergence_step = rec.stability.steps;
    rec.stability.divergence_kind = "non_finite";
    rec.stability.message = std::string("test evaluation: ") + e.what();
    rec.error = rec.stability.message;
    write_record(rec);
    throw TrainingDivergence(rec.error, static_cast<int>(res.best_epoch), rec.stability.steps, "non_finite");
  }
  rec.metrics = test.metrics;

  ordered_json m;
  m["test"] = eval_tree(test);
  m["best_epoch"] = res.best_epoch;
  m["select"] = to_string(cfg.finetune.select);
  ordered_json hist = ordered_json::array();
  for (const auto& ev : res.history) {
    ordered_json h = eval_tree(ev.val);
    h["epoch"] = ev.epoch;
    h["score"] = opt_number(ev.score);
    hist.push_back(h);
  }
  m["val_history"] = hist;
  write_text(rec.paths.metrics(), m.dump(2) + "\n");
  write_record(rec);
  return rec;
}

EvalResult run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                        const std::string& split) {
  cfg.validate();
  if (split != "val" && split != "test") throw ConfigError("split must be 'val' or 'test', got '" + split + "'");
  const Dataset data = prepare_data(cfg);
  const TaskSplits splits = task_splits(data.cohort, cfg.finetune.task, data.split);
  TimeAwareModel model = init_model(cfg);
  load_weights(model, checkpoint, cfg.precision);
  return evaluate(model, split == "val" ? splits.val : splits.test, cfg.forward, cfg.finetune.eval_batch);
}

std::vector<AblationArm> ablation_grid() {
  return {{"delta=fixed", Scheme::simclr_dpa, DeltaMode::fixed, true},
          {"delta=unaligned", Scheme::simclr_dpa, DeltaMode::unaligned, true},
          {"delta=aligned", Scheme::simclr_dpa, DeltaMode::aligned, true},
          {"tc=no", Scheme::byol_tetc, DeltaMode::aligned, false},
          {"tc=yes", Scheme::byol_tetc, DeltaMode::aligned, true}};
}

ExperimentConfig arm_config(const ExperimentConfig& base, const AblationArm& arm) {
  ExperimentConfig c = base;
  c.pretrain.scheme = arm.scheme;
  c.pretrain.delta.mode = arm.delta;
  c.pretrain.with_tc = arm.with_tc;
  return c;
}

AblationResult run_ablation(const ExperimentConfig& base, const std::filesystem::path& out_dir) {
  const auto grid = ablation_grid();
  for (const auto& arm : grid) arm_config(base, arm).validate();
  AblationResult out;
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const AblationArm& arm = grid[i];
    const ExperimentConfig c = arm_config(base, arm);
    const auto dir = out_dir / (std::to_string(i + 1) + "-" + to_string(arm.scheme) + "-" +
                                (arm.scheme == Scheme::simclr_dpa ? to_string(arm.delta)
                                                                  : std::string(arm.with_tc ? "tc" : "notc")));
    TableRow row{to_string(arm.scheme), arm.label, c.finetune.task.name(), {}};
    try {
      const RunRecord pre = run_pretrain(c, dir / "pretrain");
      RunRecord fin = run_finetune(c, pre.paths.checkpoint(), dir / "finetune");
      fin.weights = arm.label;
      write_record(fin);
      if (fin.metrics) row.metrics = *fin.metrics;
      out.runs.push_back(fin);
    } catch (const std::exception& e) {
      // A failed arm keeps its row with every metric absent.
      RunRecord failed;
      failed.kind = "finetune";
      failed.method = row.method;
      failed.weights = arm.label;
      failed.task = row.task;
      failed.paths.dir = dir;
      failed.error = e.what();
      row.metrics.undefined = MetricTable::columns();
      out.runs.push_back(failed);
    }
    rows.push_back(row);
  }
  out.table = metric_table(rows);
  write_text(out_dir / "table.json", out.table.to_json() + "\n");
  write_text(out_dir / "table.txt", out.table.to_text());
  ordered_json errs = ordered_json::array();
  for (const auto& r : out.runs)
    if (!r.error.empty()) errs.push_back({{"arm", r.weights}, {"error", r.error}});
  write_text(out_dir / "failures.json", errs.dump(2) + "\n");
  return out;
}

MetricTable collect_report(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<TableRow> rows;
  for (const auto& dir : run_dirs) {
    RunPaths paths{dir};
    const auto j = ordered_json::parse(read_text(paths.record()));
    if (j.at("kind") != "finetune" || j.at("metrics").is_null()) continue;
    rows.push_back({j.at("method").get<std::string>(), j.at("weights").get<std::string>(),
                    j.at("task").get<std::string>(), metric_set_from_json(j.at("metrics").dump())});
  }
  return metric_table(rows);
}

}  // namespace tahead
