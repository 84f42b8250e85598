// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tahead/dense.hpp"
#include "tahead/model.hpp"

namespace tahead {

enum class DeltaMode { aligned, fixed, unaligned };
std::string to_string(DeltaMode m);
DeltaMode delta_mode_from_string(const std::string& s);

struct DeltaConfig {
  DeltaMode mode = DeltaMode::aligned;
  /// delta = |r| * scale in aligned mode; r is in grades per year.
  double scale = 12.0 / 365.0;
  /// Substituted when the aligned delta is zero (stable severity): 3 months.
  double fallback = 0.25;
  double fixed = 0.25;
  /// Unaligned mode draws delta ~ Unif(0, unaligned_max).
  double unaligned_max = 0.5;

  void validate() const;
};

struct DeltaAug {
  double rate = 0.0;  // grades per year
  double delta = 0.0;
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  DeltaMode mode = DeltaMode::aligned;
};

/// Severity-rate-driven time augmentation for one pair. delta_plus is drawn
/// from Unif(0, delta) and delta_plus + delta_minus == delta holds exactly.
DeltaAug compute_delta(int s_i, int s_next, double t_i, double t_next, const DeltaConfig& cfg, Rng& rng);

/// Split delta into (plus, minus) with plus ~ Unif(0, delta), summing exactly.
std::pair<double, double> split_delta(double delta, Rng& rng);

struct DpaHorizons {
  double t_plus = 0.0;   // t_i + gap + delta_plus
  double t_minus = 0.0;  // t_i + gap - delta_minus
  bool clamped = false;  // delta_minus shrunk to gap / 2
};

/// The two perturbed targets. If gap - delta_minus <= 0 the minus offset is
/// shrunk to gap / 2 and `clamped` is set.
DpaHorizons dpa_horizons(double t_i, double gap, const DeltaAug& aug);

/// Solve each row of h from t_i to both perturbed horizons. Returns the
/// stacked views [2N, d]: rows 0..N-1 are the plus views, N..2N-1 the minus
/// views of the same elements.
Var dpa_views(Tape& tape, VectorField& field, Var h, const std::vector<double>& t_i,
              const std::vector<DpaHorizons>& horizons, const ForwardOptions& opts);

}  // namespace tahead
