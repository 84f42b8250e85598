// SPDX-License-Identifier: Apache-2.0
// Synthetic longitudinal cohort: irregular visits, drifting severity grades
// and noisy observation vectors that encode severity and time.
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "tahead/pairs.hpp"

namespace tahead {

inline constexpr int kMaxGrade = 4;

struct Visit {
  double t = 0.0;  // years since the first exam
  int grade = 0;
  Tensor x;
};

struct Trajectory {
  std::string patient_id;
  char eye = 'L';
  double progression_rate = 0.0;  // latent grades per year
  std::vector<Visit> visits;
};

struct CohortConfig {
  std::size_t n_patients = 1000;
  int min_visits = 3;
  int max_visits = 8;
  double gap_median = 1.0;  // years
  double gap_sigma = 0.5;   // log-space standard deviation
  /// Baseline latent severity S0 ~ Unif(0, baseline_max) per patient, plus a
  /// N(0, eye_offset) shift per eye.
  double baseline_max = 2.5;
  double eye_offset = 0.3;
  /// rho = 0 with probability 1 - progressing_fraction, else Unif(rate_lo, rate_hi).
  double progressing_fraction = 0.5;
  double rate_lo = 0.2;
  double rate_hi = 1.5;
  double sigma_w = 0.25;  // Brownian wobble per sqrt(year)
  std::size_t obs_dim = 32;
  double sigma_x = 2.0;
  /// Seed of the fixed mixing matrix A, shared by every cohort seed.
  std::uint64_t obs_map_seed = 7;

  void validate() const;
};

/// Deterministic in (cfg, seed).
std::vector<Trajectory> generate_cohort(const CohortConfig& cfg, std::uint64_t seed);

/// The smooth lift phi(S*, t) whose image the observation map mixes.
std::vector<double> feature_lift(double severity, double t);

/// One trajectory per line: {patient_id, eye, progression_rate, visits: [{t, S, x}]}.
void save_cohort(const std::filesystem::path& path, const std::vector<Trajectory>& cohort);
std::vector<Trajectory> load_cohort(const std::filesystem::path& path);

/// Every consecutive same-eye pair, in trajectory order.
std::vector<VisitPair> build_pairs(const std::vector<Trajectory>& cohort);
std::vector<VisitPair> build_pairs(const std::vector<Trajectory>& cohort, const std::set<std::string>& patients);

struct PatientSplit {
  std::set<std::string> train, val, test;
};

/// Patient-level 70/10/20 split, shuffled by `seed`.
PatientSplit split_patients(const std::vector<Trajectory>& cohort, std::uint64_t seed, double train_frac = 0.7,
                            double val_frac = 0.1);

enum class TaskKind { fixed_horizon, variable_interval };

struct TaskSpec {
  TaskKind kind = TaskKind::variable_interval;
  double horizon_years = 1.0;  // fixed_horizon only
  double tol_years = 0.25;

  std::string name() const;
};

struct LabeledExample {
  std::string patient_id;
  char eye = 'L';
  /// Visits up to and including the source visit, oldest first.
  std::vector<std::pair<double, Tensor>> history;
  int source_grade = 0;
  double target_time = 0.0;
  int target_grade = 0;

  double source_time() const { return history.back().first; }
};

/// All labelled examples of a task over `cohort`, possibly none.
/// fixed_horizon: source visit i and the future visit closest to t_i + H,
/// provided it lies within +-tol. variable_interval: every consecutive pair.
std::vector<LabeledExample> task_examples(const std::vector<Trajectory>& cohort, const TaskSpec& spec);

struct TaskSplits {
  std::vector<LabeledExample> train, val, test;
};

/// Examples partitioned by patient. Throws EmptySplitError when the task
/// yields no examples or any split ends up empty.
TaskSplits task_splits(const std::vector<Trajectory>& cohort, const TaskSpec& spec, const PatientSplit& split);

}  // namespace tahead
