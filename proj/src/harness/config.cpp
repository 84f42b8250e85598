// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "tahead/errors.hpp"
#include "tahead/harness.hpp"
#include "tahead/rng.hpp"

namespace tahead {

using nlohmann::ordered_json;

std::string to_string(SelectMetric m) {
  switch (m) {
    case SelectMetric::kappa: return "kappa";
    case SelectMetric::auc1: return "AUC1";
    case SelectMetric::auc2: return "AUC2";
    case SelectMetric::auc3: return "AUC3";
    case SelectMetric::loss: return "loss";
  }
  return "?";
}

SelectMetric select_metric_from_string(const std::string& s) {
  for (auto m : {SelectMetric::kappa, SelectMetric::auc1, SelectMetric::auc2, SelectMetric::auc3, SelectMetric::loss})
    if (to_string(m) == s) return m;
  throw ContractViolation("unknown selection metric '" + s + "'");
}

void FinetuneConfig::validate() const {
  require(epochs >= 0, "finetune: epochs must be >= 0");
  require(batch_size >= 1, "finetune: batch_size must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), "finetune: lr must be finite and >= 0");
  require(weight_decay >= 0.0, "finetune: weight_decay must be >= 0");
  require(eval_batch >= 1, "finetune: eval_batch must be >= 1");
  require(task.tol_years >= 0.0, "finetune: task tolerance must be >= 0");
  if (task.kind == TaskKind::fixed_horizon) require(task.horizon_years > 0.0, "finetune: horizon must be > 0");
}

void ExperimentConfig::validate() const {
  try {
    cohort.validate();
    forward.solver.validate();
    require(!model.encoder_widths.empty(), "model: encoder_widths must not be empty");
    for (auto w : model.encoder_widths) require(w >= 1, "model: encoder widths must be >= 1");
    for (auto w : model.field_hidden) require(w >= 1, "model: field widths must be >= 1");
    require(model.latent_dim >= 1 && model.projector_hidden >= 1, "model: latent_dim and projector_hidden must be >= 1");
    resolved_pretrain().validate();
    finetune.validate();
    require(!output_dir.empty(), "output_dir must not be empty");
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
}

PretrainConfig ExperimentConfig::resolved_pretrain() const {
  PretrainConfig p = pretrain;
  p.seed = derive_seed(seed, "pretrain");
  p.forward = forward;
  p.round_f32 = precision == Precision::f32;
  return p;
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Object reader that remembers which keys were consumed.
class Reader {
 public:
  Reader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + (path_.empty() ? "<root>" : path_) + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("'" + join(path_, key) + "' has the wrong type");
    }
  }

  void get_count(const std::string& key, std::size_t& out) {
    long v = static_cast<long>(out);
    get(key, v);
    if (v < 0) throw ConfigError("'" + join(path_, key) + "' must be >= 0");
    out = static_cast<std::size_t>(v);
  }

  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  template <class E, class Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    get(key, s);
    if (!j_.contains(key)) return;
    try {
      out = parse(s);
    } catch (const ContractViolation& e) {
      throw ConfigError("'" + join(path_, key) + "': " + e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  Reader child(const std::string& key) {
    seen_.insert(key);
    static const ordered_json empty = ordered_json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, join(path_, key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + join(path_, k) + "'");
  }

 private:
  const ordered_json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_delta(Reader r, DeltaConfig& d) {
  r.get_enum("mode", d.mode, delta_mode_from_string);
  r.get("scale", d.scale);
  r.get("fallback", d.fallback);
  r.get("fixed", d.fixed);
  r.get("unaligned_max", d.unaligned_max);
  r.finish();
}

void read_task(Reader r, TaskSpec& t) {
  r.get_enum("kind", t.kind, [](const std::string& s) {
    if (s == "fixed_horizon") return TaskKind::fixed_horizon;
    if (s == "variable_interval") return TaskKind::variable_interval;
    throw ContractViolation("unknown task kind '" + s + "'");
  });
  r.get("horizon_years", t.horizon_years);
  r.get("tol_years", t.tol_years);
  r.finish();
}

std::string task_kind_name(TaskKind k) { return k == TaskKind::fixed_horizon ? "fixed_horizon" : "variable_interval"; }

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Reader r(root, "");
  r.get("seed", cfg.seed);
  r.get_enum("precision", cfg.precision, precision_from_string);
  std::string out = cfg.output_dir.string();
  r.get("output_dir", out);
  cfg.output_dir = out;

  {
    Reader c = r.child("cohort");
    CohortConfig& k = cfg.cohort;
    c.get_optional("seed", cfg.cohort_seed);
    std::optional<std::string> path;
    c.get_optional("path", path);
    if (path) cfg.cohort_path = *path;
    c.get_count("n_patients", k.n_patients);
    c.get("min_visits", k.min_visits);
    c.get("max_visits", k.max_visits);
    c.get("gap_median", k.gap_median);
    c.get("gap_sigma", k.gap_sigma);
    c.get("baseline_max", k.baseline_max);
    c.get("eye_offset", k.eye_offset);
    c.get("progressing_fraction", k.progressing_fraction);
    c.get("rate_lo", k.rate_lo);
    c.get("rate_hi", k.rate_hi);
    c.get("sigma_w", k.sigma_w);
    c.get_count("obs_dim", k.obs_dim);
    c.get("sigma_x", k.sigma_x);
    c.get("obs_map_seed", k.obs_map_seed);
    c.finish();
  }
  {
    Reader m = r.child("model");
    m.get_enum("head", cfg.model.head, head_kind_from_string);
    m.get("encoder_widths", cfg.model.encoder_widths);
    m.get_count("projector_hidden", cfg.model.projector_hidden);
    m.get_count("latent_dim", cfg.model.latent_dim);
    m.get("field_hidden", cfg.model.field_hidden);
    m.finish();
  }
  {
    Reader s = r.child("solver");
    SolverConfig& sc = cfg.forward.solver;
    s.get_enum("method", sc.method, solver_method_from_string);
    s.get("rtol", sc.rtol);
    s.get("atol", sc.atol);
    s.get("max_steps", sc.max_steps);
    s.get("initial_step", sc.initial_step);
    s.get("fixed_step_count", sc.fixed_step_count);
    s.get_enum("grad_mode", cfg.forward.grad_mode, [](const std::string& v) {
      if (v == "adjoint") return GradMode::adjoint;
      if (v == "backprop") return GradMode::backprop;
      throw ContractViolation("unknown grad_mode '" + v + "'");
    });
    s.finish();
  }
  {
    Reader p = r.child("pretrain");
    PretrainConfig& pc = cfg.pretrain;
    p.get_enum("scheme", pc.scheme, scheme_from_string);
    p.get("epochs", pc.epochs);
    p.get_count("batch_size", pc.batch_size);
    p.get("lr", pc.lr);
    p.get("weight_decay", pc.weight_decay);
    p.get("temperature", pc.temperature);
    p.get("ema_alpha", pc.ema_alpha);
    p.get("with_tc", pc.with_tc);
    p.get("separate_target_encoder", pc.separate_target_encoder);
    read_delta(p.child("delta"), pc.delta);
    p.finish();
  }
  {
    Reader f = r.child("finetune");
    FinetuneConfig& fc = cfg.finetune;
    f.get("epochs", fc.epochs);
    f.get_count("batch_size", fc.batch_size);
    f.get("lr", fc.lr);
    f.get("weight_decay", fc.weight_decay);
    f.get_enum("select", fc.select, select_metric_from_string);
    f.get_count("eval_batch", fc.eval_batch);
    read_task(f.child("task"), fc.task);
    f.finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

namespace {

ordered_json to_json_tree(const ExperimentConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["precision"] = to_string(cfg.precision);
  j["output_dir"] = cfg.output_dir.string();
  const CohortConfig& k = cfg.cohort;
  j["cohort"] = {{"seed", cfg.cohort_seed ? ordered_json(*cfg.cohort_seed) : ordered_json(nullptr)},
                 {"path", cfg.cohort_path ? ordered_json(cfg.cohort_path->string()) : ordered_json(nullptr)},
                 {"n_patients", k.n_patients},
                 {"min_visits", k.min_visits},
                 {"max_visits", k.max_visits},
                 {"gap_median", k.gap_median},
                 {"gap_sigma", k.gap_sigma},
                 {"baseline_max", k.baseline_max},
                 {"eye_offset", k.eye_offset},
                 {"progressing_fraction", k.progressing_fraction},
                 {"rate_lo", k.rate_lo},
                 {"rate_hi", k.rate_hi},
                 {"sigma_w", k.sigma_w},
                 {"obs_dim", k.obs_dim},
                 {"sigma_x", k.sigma_x},
                 {"obs_map_seed", k.obs_map_seed}};
  j["model"] = {{"head", to_string(cfg.model.head)},
                {"encoder_widths", cfg.model.encoder_widths},
                {"projector_hidden", cfg.model.projector_hidden},
                {"latent_dim", cfg.model.latent_dim},
                {"field_hidden", cfg.model.field_hidden}};
  const SolverConfig& s = cfg.forward.solver;
  j["solver"] = {{"method", to_string(s.method)},
                 {"rtol", s.rtol},
                 {"atol", s.atol},
                 {"max_steps", s.max_steps},
                 {"initial_step", s.initial_step},
                 {"fixed_step_count", s.fixed_step_count},
                 {"grad_mode", cfg.forward.grad_mode == GradMode::adjoint ? "adjoint" : "backprop"}};
  const PretrainConfig& p = cfg.pretrain;
  j["pretrain"] = {{"scheme", to_string(p.scheme)},
                   {"epochs", p.epochs},
                   {"batch_size", p.batch_size},
                   {"lr", p.lr},
                   {"weight_decay", p.weight_decay},
                   {"temperature", p.temperature},
                   {"ema_alpha", p.ema_alpha},
                   {"with_tc", p.with_tc},
                   {"separate_target_encoder", p.separate_target_encoder},
                   {"delta",
                    {{"mode", to_string(p.delta.mode)},
                     {"scale", p.delta.scale},
                     {"fallback", p.delta.fallback},
                     {"fixed", p.delta.fixed},
                     {"unaligned_max", p.delta.unaligned_max}}}};
  const FinetuneConfig& f = cfg.finetune;
  j["finetune"] = {{"epochs", f.epochs},
                   {"batch_size", f.batch_size},
                   {"lr", f.lr},
                   {"weight_decay", f.weight_decay},
                   {"select", to_string(f.select)},
                   {"eval_batch", f.eval_batch},
                   {"task",
                    {{"kind", task_kind_name(f.task.kind)},
                     {"horizon_years", f.task.horizon_years},
                     {"tol_years", f.task.tol_years}}}};
  return j;
}

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return to_json_tree(cfg).dump(2); }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  ordered_json tree = to_json_tree(cfg);
  ordered_json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
  cfg = config_from_json(tree.dump());
}

std::string config_hash(const ExperimentConfig& cfg) {
  ordered_json tree = to_json_tree(cfg);
  tree.erase("output_dir");  // where a run is written does not change what it computes
  return fnv_hex(tree.dump());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tahead
