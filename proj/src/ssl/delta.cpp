// SPDX-License-Identifier: Apache-2.0
#include "tahead/delta.hpp"

#include <cmath>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {

std::string to_string(DeltaMode m) {
  switch (m) {
    case DeltaMode::aligned: return "aligned";
    case DeltaMode::fixed: return "fixed";
    case DeltaMode::unaligned: return "unaligned";
  }
  return "?";
}

DeltaMode delta_mode_from_string(const std::string& s) {
  if (s == "aligned") return DeltaMode::aligned;
  if (s == "fixed") return DeltaMode::fixed;
  if (s == "unaligned") return DeltaMode::unaligned;
  throw ContractViolation("unknown delta mode '" + s + "'");
}

void DeltaConfig::validate() const {
  require(std::isfinite(scale) && scale >= 0.0, "delta.scale must be finite and >= 0");
  require(std::isfinite(fallback) && fallback >= 0.0, "delta.fallback must be finite and >= 0");
  require(std::isfinite(fixed) && fixed >= 0.0, "delta.fixed must be finite and >= 0");
  require(std::isfinite(unaligned_max) && unaligned_max >= 0.0, "delta.unaligned_max must be finite and >= 0");
}

std::pair<double, double> split_delta(double delta, Rng& rng) {
  if (delta == 0.0) return {0.0, 0.0};
  double plus = std::uniform_real_distribution<double>(0.0, delta)(rng);
  // delta - plus is exact when plus >= delta / 2 (Sterbenz). Below that,
  // snap plus by one rounding so the larger part is the one computed first;
  // either way plus + minus reproduces delta bit for bit.
  if (plus < 0.5 * delta) plus = delta - (delta - plus);
  return {plus, delta - plus};
}

DeltaAug compute_delta(int s_i, int s_next, double t_i, double t_next, const DeltaConfig& cfg, Rng& rng) {
  require(std::isfinite(t_i) && std::isfinite(t_next), "compute_delta: times must be finite");
  require(t_next > t_i, "compute_delta: t_next must be after t_i");
  DeltaAug aug;
  aug.mode = cfg.mode;
  aug.rate = static_cast<double>(s_next - s_i) / (t_next - t_i);
  switch (cfg.mode) {
    case DeltaMode::aligned:
      aug.delta = std::abs(aug.rate) * cfg.scale;
      if (aug.delta == 0.0) aug.delta = cfg.fallback;
      break;
    case DeltaMode::fixed: aug.delta = cfg.fixed; break;
    case DeltaMode::unaligned:
      aug.delta = cfg.unaligned_max > 0.0 ? std::uniform_real_distribution<double>(0.0, cfg.unaligned_max)(rng) : 0.0;
      break;
  }
  std::tie(aug.delta_plus, aug.delta_minus) = split_delta(aug.delta, rng);
  return aug;
}

DpaHorizons dpa_horizons(double t_i, double gap, const DeltaAug& aug) {
  require(gap > 0.0, "dpa_horizons: gap must be positive");
  DpaHorizons out;
  double minus = aug.delta_minus;
  if (gap - minus <= 0.0) {
    minus = 0.5 * gap;
    out.clamped = true;
  }
  out.t_plus = t_i + (gap + aug.delta_plus);
  out.t_minus = t_i + (gap - minus);
  return out;
}

Var dpa_views(Tape& tape, VectorField& field, Var h, const std::vector<double>& t_i,
              const std::vector<DpaHorizons>& horizons, const ForwardOptions& opts) {
  const std::size_t n = h.value().rows();
  require(t_i.size() == n && horizons.size() == n, "dpa_views: one time and horizon per row");
  std::vector<double> from(2 * n), to(2 * n);
  for (std::size_t r = 0; r < n; ++r) {
    from[r] = from[n + r] = t_i[r];
    to[r] = horizons[r].t_plus;
    to[n + r] = horizons[r].t_minus;
  }
  return predict_latent_rows(tape, field, ops::concat_rows({h, h}), from, to, opts);
}

}  // namespace tahead
