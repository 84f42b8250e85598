// SPDX-License-Identifier: Apache-2.0
// Experiment orchestration: configuration, fine-tuning, evaluation and the
// run-directory layout shared by the command-line tool.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tahead/checkpoint.hpp"
#include "tahead/metrics.hpp"
#include "tahead/model.hpp"
#include "tahead/pretrain.hpp"
#include "tahead/synthdata.hpp"

namespace tahead {

/// Metric used to pick the best fine-tuning epoch on the validation split.
enum class SelectMetric { kappa, auc1, auc2, auc3, loss };
std::string to_string(SelectMetric m);
SelectMetric select_metric_from_string(const std::string& s);

struct FinetuneConfig {
  long epochs = 20;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  TaskSpec task;
  SelectMetric select = SelectMetric::auc2;
  /// Chunk size for evaluation passes; does not affect results.
  std::size_t eval_batch = 512;

  void validate() const;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Precision precision = Precision::f64;
  std::filesystem::path output_dir = "runs/default";
  CohortConfig cohort;
  /// Cohort seed; the run seed when unset.
  std::optional<std::uint64_t> cohort_seed;
  /// Load the cohort from a JSONL file instead of generating it.
  std::optional<std::filesystem::path> cohort_path;
  ModelConfig model;
  ForwardOptions forward;
  PretrainConfig pretrain;  // its seed, solver and precision fields are derived
  FinetuneConfig finetune;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  /// Derived settings handed to the pre-training loop.
  PretrainConfig resolved_pretrain() const;
  std::uint64_t data_seed() const { return cohort_seed.value_or(seed); }
};

/// Strict JSON reading: unknown keys, wrong types and invalid values throw
/// ConfigError with the dotted key path. Missing keys keep their defaults.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved configuration, every field present.
std::string config_to_json(const ExperimentConfig& cfg);
/// Apply one `dotted.key=value` override; the value is parsed as JSON and
/// taken as a plain string when that fails.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
/// Hex FNV-1a digest of the resolved JSON.
std::string config_hash(const ExperimentConfig& cfg);

struct Dataset {
  std::vector<Trajectory> cohort;
  PatientSplit split;
};
Dataset prepare_data(const ExperimentConfig& cfg);

/// Model initialised from the run seed. Every arm of a comparison built from
/// the same config starts from the same weights before any checkpoint load.
TimeAwareModel init_model(const ExperimentConfig& cfg);

struct EvalResult {
  MetricSet metrics;
  double loss = 0.0;  // mean cross-entropy
  std::size_t examples = 0;
};

/// Severity logits at each example's target time. Cell heads ingest the
/// whole history; the plain NODE head starts from the source visit only.
Var example_logits(Tape& tape, TimeAwareModel& model, const std::vector<LabeledExample>& examples,
                   const std::vector<std::size_t>& rows, const ForwardOptions& opts);

EvalResult evaluate(TimeAwareModel& model, const std::vector<LabeledExample>& examples, const ForwardOptions& opts,
                    std::size_t chunk = 512);

struct EpochEval {
  long epoch = 0;  // 0 is before any update
  EvalResult val;
  std::optional<double> score;  // selection score, larger is better
};

struct FinetuneResult {
  std::vector<LossRow> curve;
  StabilityReport stability;
  std::vector<EpochEval> history;
  long best_epoch = 0;
};

/// Train every parameter of `model` with cross-entropy on `data.train`,
/// evaluating `data.val` after each epoch. On return the model holds the
/// weights of the best validation epoch. Throws TrainingDivergence.
FinetuneResult finetune(TimeAwareModel& model, const TaskSplits& data, const ExperimentConfig& cfg,
                        const LossSink& sink = {});

/// Selection score of an evaluation; empty when the metric is undefined.
std::optional<double> selection_score(const EvalResult& r, SelectMetric m);

// ---------------------------------------------------------------------------
// Run directories.

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint"; }
  std::filesystem::path loss_curve() const { return dir / "loss_curve.jsonl"; }
  std::filesystem::path metrics() const { return dir / "metrics.json"; }
  std::filesystem::path stability() const { return dir / "stability.json"; }
  std::filesystem::path record() const { return dir / "run.json"; }
};

struct RunRecord {
  std::string kind;  // pretrain | finetune
  std::string method;   // head kind
  std::string weights;  // "scratch" or the pre-training scheme
  std::string task;
  std::string config_hash;
  RunPaths paths;
  std::optional<std::string> checkpoint_digest;
  std::optional<MetricSet> metrics;
  StabilityReport stability;
  std::string error;  // set when the run failed
};

std::string loss_row_json(const LossRow& row);
std::string stability_json(const StabilityReport& r);
std::string metric_set_json(const MetricSet& m);
MetricSet metric_set_from_json(const std::string& text);

/// Pre-train the backbone on the train-patient pairs and save it. Only the
/// backbone is written so that every head can start from it.
RunRecord run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Fine-tune from `pretrained` (or from scratch) and evaluate the best
/// validation epoch on the test split.
RunRecord run_finetune(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& pretrained,
                       const std::filesystem::path& out_dir);

/// Metrics of a fine-tuned checkpoint on one split ("val" or "test").
EvalResult run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                        const std::string& split);

struct AblationArm {
  std::string label;
  Scheme scheme = Scheme::simclr_dpa;
  DeltaMode delta = DeltaMode::aligned;
  bool with_tc = true;
};
/// The five arms in declared order: simclr_dpa with fixed, unaligned and
/// aligned delta, then byol_tetc without and with the inverse constraint.
std::vector<AblationArm> ablation_grid();
ExperimentConfig arm_config(const ExperimentConfig& base, const AblationArm& arm);

struct AblationResult {
  MetricTable table;
  std::vector<RunRecord> runs;
};
/// Pre-train and fine-tune every arm. Failed arms keep their row with no
/// metrics and the error recorded; the grid continues.
AblationResult run_ablation(const ExperimentConfig& base, const std::filesystem::path& out_dir);

/// Table rows from finished run directories (their run.json files).
MetricTable collect_report(const std::vector<std::filesystem::path>& run_dirs);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tahead
