// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: data generation, pre-training, fine-tuning,
// evaluation, ablation grids and result tables.
#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "tahead/errors.hpp"
#include "tahead/harness.hpp"

namespace {

using namespace tahead;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kCheckpoint = 4 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  bool dry_run = false;
  std::vector<std::string> overrides;
  // Shorthands for frequently changed config fields.
  std::optional<std::string> head, scheme, delta_mode, output_dir;
  std::optional<bool> with_tc;
  std::optional<long> pretrain_epochs, finetune_epochs;
  std::optional<double> pretrain_lr, finetune_lr;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  auto set = [&](const std::string& key, const nlohmann::json& v) { apply_override(cfg, key + "=" + v.dump()); };
  if (g.seed) set("seed", *g.seed);
  if (g.precision) set("precision", *g.precision);
  if (g.head) set("model.head", *g.head);
  if (g.scheme) set("pretrain.scheme", *g.scheme);
  if (g.delta_mode) set("pretrain.delta.mode", *g.delta_mode);
  if (g.with_tc) set("pretrain.with_tc", *g.with_tc);
  if (g.pretrain_epochs) set("pretrain.epochs", *g.pretrain_epochs);
  if (g.finetune_epochs) set("finetune.epochs", *g.finetune_epochs);
  if (g.pretrain_lr) set("pretrain.lr", *g.pretrain_lr);
  if (g.finetune_lr) set("finetune.lr", *g.finetune_lr);
  if (g.output_dir) set("output_dir", *g.output_dir);
  for (const auto& o : g.overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

void print_plan(const ExperimentConfig& cfg, const std::string& command, const std::vector<std::string>& steps) {
  std::cout << "dry run: " << command << " (config " << config_hash(cfg) << ")\n";
  for (const auto& s : steps) std::cout << "  - " << s << '\n';
  std::cout << config_to_json(cfg) << '\n';
}

std::string pretrain_step(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  return "pre-train " + to_string(cfg.pretrain.scheme) + " for " + std::to_string(cfg.pretrain.epochs) +
         " epochs on train-patient pairs, delta " + to_string(cfg.pretrain.delta.mode) +
         (cfg.pretrain.scheme == Scheme::byol_tetc ? std::string(cfg.pretrain.with_tc ? ", with TC" : ", no TC") : "") +
         " -> " + dir.string();
}

std::string finetune_step(const ExperimentConfig& cfg, const std::string& init, const std::filesystem::path& dir) {
  return "fine-tune " + to_string(cfg.model.head) + " on " + cfg.finetune.task.name() + " for " +
         std::to_string(cfg.finetune.epochs) + " epochs from " + init + ", select on val " +
         to_string(cfg.finetune.select) + " -> " + dir.string();
}

void print_record(const RunRecord& rec) {
  std::cout << "run " << rec.paths.dir.string() << " (" << rec.kind << ", config " << rec.config_hash << ")\n";
  if (rec.checkpoint_digest) std::cout << "checkpoint digest " << *rec.checkpoint_digest << '\n';
  if (rec.metrics) {
    MetricTable t{{{rec.method, rec.weights, rec.task, *rec.metrics}}};
    std::cout << t.to_text();
    for (const auto& u : rec.metrics->undefined) std::cout << "undefined metric: " << u << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-aware neural ODE heads with self-supervised pre-training"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "run seed");
  app.add_option("--precision", g.precision, "weight storage precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_flag("--dry-run", g.dry_run, "validate the config and print the plan without computing");
  app.add_option("--set", g.overrides, "config override, dotted.key=value (repeatable)");
  app.add_option("--head", g.head, "model.head");
  app.add_option("--scheme", g.scheme, "pretrain.scheme");
  app.add_option("--delta-mode", g.delta_mode, "pretrain.delta.mode");
  app.add_option("--with-tc", g.with_tc, "pretrain.with_tc");
  app.add_option("--pretrain-epochs", g.pretrain_epochs, "pretrain.epochs");
  app.add_option("--finetune-epochs", g.finetune_epochs, "finetune.epochs");
  app.add_option("--pretrain-lr", g.pretrain_lr, "pretrain.lr");
  app.add_option("--finetune-lr", g.finetune_lr, "finetune.lr");
  app.add_option("--output-dir", g.output_dir, "output_dir");

  std::string out;
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::string> run_dirs;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic cohort as JSONL");
  gen->add_option("--out", out, "cohort file (default <output_dir>/cohort.jsonl)");
  auto* pre = app.add_subcommand("pretrain", "self-supervised pre-training of the backbone");
  pre->add_option("--out", out, "run directory (default <output_dir>/pretrain)");
  auto* fin = app.add_subcommand("finetune", "fine-tune a head on the configured task");
  fin->add_option("--checkpoint", checkpoint, "pre-trained checkpoint base path; omit for scratch");
  fin->add_option("--out", out, "run directory (default <output_dir>/finetune)");
  auto* ev = app.add_subcommand("evaluate", "metrics of a fine-tuned checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint base path")->required();
  ev->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));
  auto* abl = app.add_subcommand("ablate", "pre-training ablation grid (5 runs)");
  abl->add_option("--out", out, "grid directory (default <output_dir>/ablation)");
  auto* rep = app.add_subcommand("report", "result table from finished fine-tuning runs");
  rep->add_option("runs", run_dirs, "run directories")->required();
  rep->add_option("--out", out, "write the table as JSON here as well");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (rep->parsed()) {
      const MetricTable t = collect_report({run_dirs.begin(), run_dirs.end()});
      std::cout << t.to_text();
      if (!out.empty()) write_text(out, t.to_json() + "\n");
      return kOk;
    }
    const ExperimentConfig cfg = resolve(g);
    const std::filesystem::path base = cfg.output_dir;

    if (gen->parsed()) {
      const std::filesystem::path path = out.empty() ? base / "cohort.jsonl" : std::filesystem::path(out);
      if (g.dry_run) {
        print_plan(cfg, "gen-data", {"generate " + std::to_string(cfg.cohort.n_patients) + " patients -> " + path.string()});
        return kOk;
      }
      const Dataset d = prepare_data(cfg);
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      save_cohort(path, d.cohort);
      std::cout << "wrote " << d.cohort.size() << " trajectories to " << path.string() << '\n';
    } else if (pre->parsed()) {
      const std::filesystem::path dir = out.empty() ? base / "pretrain" : std::filesystem::path(out);
      if (g.dry_run) {
        print_plan(cfg, "pretrain", {pretrain_step(cfg, dir)});
        return kOk;
      }
      print_record(run_pretrain(cfg, dir));
    } else if (fin->parsed()) {
      const std::filesystem::path dir = out.empty() ? base / "finetune" : std::filesystem::path(out);
      std::optional<std::filesystem::path> init;
      if (!checkpoint.empty()) init = checkpoint;
      if (g.dry_run) {
        print_plan(cfg, "finetune", {finetune_step(cfg, init ? init->string() : "scratch", dir)});
        return kOk;
      }
      print_record(run_finetune(cfg, init, dir));
    } else if (ev->parsed()) {
      if (g.dry_run) {
        print_plan(cfg, "evaluate", {"evaluate " + checkpoint + " on the " + split + " split"});
        return kOk;
      }
      const EvalResult r = run_evaluate(cfg, checkpoint, split);
      std::cout << metric_set_json(r.metrics) << '\n';
      for (const auto& u : r.metrics.undefined) std::cerr << "undefined metric: " << u << '\n';
    } else if (abl->parsed()) {
      const std::filesystem::path dir = out.empty() ? base / "ablation" : std::filesystem::path(out);
      if (g.dry_run) {
        std::vector<std::string> steps;
        for (const auto& arm : ablation_grid()) {
          const ExperimentConfig c = arm_config(cfg, arm);
          steps.push_back(arm.label + ": " + pretrain_step(c, dir) + "; then " + finetune_step(c, "that checkpoint", dir));
        }
        print_plan(cfg, "ablate", steps);
        return kOk;
      }
      const AblationResult res = run_ablation(cfg, dir);
      std::cout << res.table.to_text();
      for (const auto& r : res.runs)
        if (!r.error.empty()) std::cerr << "arm " << r.weights << " failed: " << r.error << '\n';
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ContractViolation& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const EmptySplitError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const TrainingDivergence& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const CheckpointError& e) {
    std::cerr << "incompatible checkpoint: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
