// SPDX-License-Identifier: Apache-2.0
#include "tahead/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numbers>

#include "tahead/errors.hpp"
#include "tahead/rng.hpp"

namespace tahead {

using nlohmann::json;

void CohortConfig::validate() const {
  require(n_patients >= 1, "cohort: n_patients must be >= 1");
  require(min_visits >= 2 && max_visits >= min_visits, "cohort: need 2 <= min_visits <= max_visits");
  require(gap_median > 0.0 && gap_sigma >= 0.0, "cohort: gap_median > 0 and gap_sigma >= 0 required");
  require(baseline_max >= 0.0 && baseline_max <= kMaxGrade, "cohort: baseline_max must lie in [0, 4]");
  require(eye_offset >= 0.0 && sigma_w >= 0.0 && sigma_x >= 0.0, "cohort: noise scales must be >= 0");
  require(progressing_fraction >= 0.0 && progressing_fraction <= 1.0, "cohort: progressing_fraction in [0, 1]");
  require(rate_lo >= 0.0 && rate_hi >= rate_lo, "cohort: need 0 <= rate_lo <= rate_hi");
  require(obs_dim >= 1, "cohort: obs_dim must be >= 1");
}

std::vector<double> feature_lift(double s, double t) {
  const double u = s / kMaxGrade;
  const double tau = t / 10.0;
  std::vector<double> f{u, u * u, std::sin(std::numbers::pi * u), std::cos(std::numbers::pi * u)};
  for (int c = 0; c <= kMaxGrade; ++c) f.push_back(std::exp(-(s - c) * (s - c) / 0.5));
  f.push_back(std::tanh(2.0 * (s - 1.5)));
  f.push_back(std::tanh(2.0 * (s - 2.5)));
  f.push_back(tau);
  f.push_back(tau * tau);
  f.push_back(u * tau);
  return f;
}

namespace {

std::vector<double> mixing_matrix(const CohortConfig& cfg, std::size_t features) {
  Rng rng = make_rng(cfg.obs_map_seed, "obs-map");
  std::normal_distribution<double> n01;
  const double scale = 1.0 / std::sqrt(static_cast<double>(features));
  std::vector<double> a(cfg.obs_dim * features);
  for (auto& v : a) v = n01(rng) * scale;
  return a;
}

std::string patient_name(std::size_t k) {
  std::string digits = std::to_string(k);
  return "P" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace

std::vector<Trajectory> generate_cohort(const CohortConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t nf = feature_lift(0.0, 0.0).size();
  const std::vector<double> a = mixing_matrix(cfg, nf);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;

  std::vector<Trajectory> out;
  out.reserve(2 * cfg.n_patients);
  for (std::size_t k = 0; k < cfg.n_patients; ++k) {
    Rng rng = make_rng(seed, "patient", k);
    const int m = std::uniform_int_distribution<int>(cfg.min_visits, cfg.max_visits)(rng);
    // Both eyes are photographed at the same exams.
    std::vector<double> times{0.0};
    for (int v = 1; v < m; ++v) times.push_back(times.back() + cfg.gap_median * std::exp(cfg.gap_sigma * n01(rng)));
    const double s0 = cfg.baseline_max * u01(rng);
    const double rho = u01(rng) < cfg.progressing_fraction
                           ? std::uniform_real_distribution<double>(cfg.rate_lo, cfg.rate_hi)(rng)
                           : 0.0;
    for (char eye : {'L', 'R'}) {
      Trajectory tr;
      tr.patient_id = patient_name(k);
      tr.eye = eye;
      tr.progression_rate = rho;
      const double base = s0 + cfg.eye_offset * n01(rng);
      double w = 0.0;
      for (int v = 0; v < m; ++v) {
        if (v > 0) w += std::sqrt(times[v] - times[v - 1]) * n01(rng);
        const double latent = std::clamp(base + rho * times[v] + cfg.sigma_w * w, 0.0, double(kMaxGrade));
        const std::vector<double> phi = feature_lift(latent, times[v]);
        Visit visit;
        visit.t = times[v];
        visit.grade = static_cast<int>(std::lround(latent));
        visit.x = Tensor(Shape{cfg.obs_dim});
        for (std::size_t i = 0; i < cfg.obs_dim; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < nf; ++j) s += a[i * nf + j] * phi[j];
          visit.x[i] = s + cfg.sigma_x * n01(rng);
        }
        tr.visits.push_back(std::move(visit));
      }
      out.push_back(std::move(tr));
    }
  }
  return out;
}

void save_cohort(const std::filesystem::path& path, const std::vector<Trajectory>& cohort) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write cohort to " + path.string());
  for (const auto& tr : cohort) {
    json visits = json::array();
    for (const auto& v : tr.visits) {
      visits.push_back({{"t", v.t}, {"S", v.grade}, {"x", std::vector<double>(v.x.data().begin(), v.x.data().end())}});
    }
    json rec = {{"patient_id", tr.patient_id},
                {"eye", std::string(1, tr.eye)},
                {"progression_rate", tr.progression_rate},
                {"visits", visits}};
    os << rec.dump() << '\n';
  }
  if (!os) throw std::runtime_error("failed writing cohort to " + path.string());
}

std::vector<Trajectory> load_cohort(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read cohort from " + path.string());
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Trajectory tr;
      tr.patient_id = rec.at("patient_id").get<std::string>();
      const auto eye = rec.at("eye").get<std::string>();
      require(eye == "L" || eye == "R", "eye must be L or R");
      tr.eye = eye[0];
      tr.progression_rate = rec.at("progression_rate").get<double>();
      for (const auto& v : rec.at("visits")) {
        Visit visit;
        visit.t = v.at("t").get<double>();
        visit.grade = v.at("S").get<int>();
        require(visit.grade >= 0 && visit.grade <= kMaxGrade, "grade out of range");
        const auto x = v.at("x").get<std::vector<double>>();
        visit.x = Tensor(Shape{x.size()}, x);
        require(visit.x.all_finite(), "non-finite observation");
        if (!tr.visits.empty()) require(visit.t > tr.visits.back().t, "visit times must be strictly increasing");
        tr.visits.push_back(std::move(visit));
      }
      out.push_back(std::move(tr));
    } catch (const std::exception& e) {
      throw ContractViolation(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<VisitPair> build_pairs(const std::vector<Trajectory>& cohort) {
  std::vector<VisitPair> out;
  for (const auto& tr : cohort) {
    for (std::size_t i = 0; i + 1 < tr.visits.size(); ++i) {
      const Visit& a = tr.visits[i];
      const Visit& b = tr.visits[i + 1];
      out.push_back({tr.patient_id, tr.eye, i, a.x, b.x, a.t, b.t, a.grade, b.grade});
    }
  }
  return out;
}

std::vector<VisitPair> build_pairs(const std::vector<Trajectory>& cohort, const std::set<std::string>& patients) {
  std::vector<VisitPair> all = build_pairs(cohort);
  std::erase_if(all, [&](const VisitPair& p) { return !patients.contains(p.patient_id); });
  return all;
}

PatientSplit split_patients(const std::vector<Trajectory>& cohort, std::uint64_t seed, double train_frac,
                            double val_frac) {
  require(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0, "split fractions must leave a test share");
  std::vector<std::string> ids;
  for (const auto& tr : cohort)
    if (ids.empty() || ids.back() != tr.patient_id) ids.push_back(tr.patient_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng = make_rng(seed, "patient-split");
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::lround(train_frac * n));
  const auto n_val = static_cast<std::size_t>(std::lround(val_frac * n));
  PatientSplit out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < n_train)
      out.train.insert(ids[i]);
    else if (i < n_train + n_val)
      out.val.insert(ids[i]);
    else
      out.test.insert(ids[i]);
  }
  return out;
}

std::string TaskSpec::name() const {
  if (kind == TaskKind::variable_interval) return "variable_interval";
  char buf[48];
  std::snprintf(buf, sizeof buf, "fixed_horizon_%gy", horizon_years);
  return buf;
}

std::vector<LabeledExample> task_examples(const std::vector<Trajectory>& cohort, const TaskSpec& spec) {
  require(spec.tol_years >= 0.0, "task: tolerance must be >= 0");
  if (spec.kind == TaskKind::fixed_horizon) require(spec.horizon_years > 0.0, "task: horizon must be > 0");
  std::vector<LabeledExample> out;
  for (const auto& tr : cohort) {
    for (std::size_t i = 0; i + 1 < tr.visits.size(); ++i) {
      std::size_t target = i + 1;
      if (spec.kind == TaskKind::fixed_horizon) {
        const double want = tr.visits[i].t + spec.horizon_years;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = i + 1; j < tr.visits.size(); ++j) {
          const double err = std::abs(tr.visits[j].t - want);
          if (err < best) {
            best = err;
            target = j;
          }
        }
        if (best > spec.tol_years) continue;
      }
      LabeledExample ex;
      ex.patient_id = tr.patient_id;
      ex.eye = tr.eye;
      for (std::size_t k = 0; k <= i; ++k) ex.history.emplace_back(tr.visits[k].t, tr.visits[k].x);
      ex.source_grade = tr.visits[i].grade;
      ex.target_time = tr.visits[target].t;
      ex.target_grade = tr.visits[target].grade;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

TaskSplits task_splits(const std::vector<Trajectory>& cohort, const TaskSpec& spec, const PatientSplit& split) {
  auto all = task_examples(cohort, spec);
  if (all.empty()) throw EmptySplitError("task " + spec.name() + " has no examples");
  TaskSplits out;
  for (auto& ex : all) {
    if (split.train.contains(ex.patient_id))
      out.train.push_back(std::move(ex));
    else if (split.val.contains(ex.patient_id))
      out.val.push_back(std::move(ex));
    else if (split.test.contains(ex.patient_id))
      out.test.push_back(std::move(ex));
  }
  for (auto [name, part] : {std::pair{"train", &out.train}, std::pair{"val", &out.val}, std::pair{"test", &out.test}})
    if (part->empty()) throw EmptySplitError("task " + spec.name() + " has an empty " + name + " split");
  return out;
}

}  // namespace tahead
