// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//
//   acceptance [--work DIR] [--only 1,2,...]
//
// Exit status is 0 only when every selected criterion passes.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "tahead/adjoint.hpp"
#include "tahead/errors.hpp"
#include "tahead/field.hpp"
#include "tahead/harness.hpp"
#include "tahead/metrics.hpp"
#include "tahead/ode.hpp"
#include "tahead/ssl.hpp"

using namespace tahead;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Criterion 1
constexpr int kGradInstances = 20;
constexpr std::size_t kGradMaxDim = 8;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradForwardRtol = 1e-8;
constexpr int kGradRk4Steps = 200;
constexpr double kGradMaxSeconds = 120.0;
// Criterion 2
constexpr double kExpRelTol = 1e-5;
constexpr double kDopri5MinOrder = 4.5;
constexpr double kRk4MinOrder = 3.8;
// Criterion 3
constexpr int kInvertFields = 100;
constexpr double kInvertTol = 1e-3;
// Criterion 4
constexpr double kLossTol = 1e-10;
constexpr double kEmaTol = 1e-12;
// Criterion 5
constexpr int kDeltaDraws = 10000;
constexpr double kKsMinP = 0.01;
constexpr double kDefaultDelta = 0.25;
// Criterion 6
constexpr double kByolMinGain = 0.03;
constexpr double kSimclrMinGain = 0.02;
constexpr double kGridMaxCpuSeconds = 30.0 * 60.0;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};
// Criterion 7
constexpr int kTcMinWins = 2;
// Criterion 8
constexpr double kUnstableLr = 1.0;
constexpr int kDivergenceExit = 3;
// Criterion 10
constexpr double kMetricTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den = std::max(den, std::max(a[i] * a[i], b[i] * b[i]));
  }
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / (std::max(std::sqrt(na), std::sqrt(nb)) + 1e-12);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_triangle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  std::mt19937_64 r(1002);
  std::uniform_int_distribution<std::size_t> dim(2, kGradMaxDim);
  SolverConfig adj_cfg;
  adj_cfg.rtol = kGradForwardRtol;
  adj_cfg.atol = kGradForwardRtol * 1e-2;
  SolverConfig rk4_cfg;
  rk4_cfg.method = SolverMethod::rk4;
  rk4_cfg.fixed_step_count = kGradRk4Steps;
  double worst = 0.0;
  for (int k = 0; k < kGradInstances; ++k) {
    const std::size_t d = dim(r);
    VectorField f("f", d, {12}, rng);
    const Tensor h0 = random_tensor({d}, r);
    const Tensor g = random_tensor({d}, r);
    const double t1 = 0.5 + 0.05 * k;
    auto loss = [&](const Tensor& h) { return dot(g, rk4_solve(h, f.dynamics(), 0.0, t1, kGradRk4Steps).h_end); };

    // Central differences of the rk4 loss, in parameters() order, then h0.
    const double eps = 1e-6;
    std::vector<double> fd;
    for (auto* p : f.parameters()) {
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double v0 = p->value[i];
        p->value[i] = v0 + eps;
        const double lp = loss(h0);
        p->value[i] = v0 - eps;
        const double lm = loss(h0);
        p->value[i] = v0;
        fd.push_back((lp - lm) / (2 * eps));
      }
    }
    Tensor hh = h0;
    for (std::size_t i = 0; i < d; ++i) {
      const double v0 = hh[i];
      hh[i] = v0 + eps;
      const double lp = loss(hh);
      hh[i] = v0 - eps;
      const double lm = loss(hh);
      hh[i] = v0;
      fd.push_back((lp - lm) / (2 * eps));
    }
    const auto adj = grad_adjoint(h0, f, 0.0, t1, g, adj_cfg);
    const auto thr = grad_through_solver(h0, f, 0.0, t1, g, rk4_cfg);
    std::vector<double> a = adj.dtheta, b = thr.dtheta;
    for (double v : values(adj.dh0)) a.push_back(v);
    for (double v : values(thr.dh0)) b.push_back(v);
    worst = std::max({worst, rel_err(a, fd), rel_err(b, fd), rel_err(a, b)});
  }
  const double secs = wall_since(t0);
  return {worst < kGradRelTol && secs < kGradMaxSeconds,
          "max pairwise rel err " + fmt("%.2e", worst) + " over " + std::to_string(kGradInstances) +
              " fields (tol " + fmt("%.0e", kGradRelTol) + "), " + fmt("%.1f", secs) + " s"};
}

Outcome solver_accuracy() {
  const Dynamics ident = [](double, const Tensor& h) { return h; };
  const double e = std::numbers::e;
  const double err_e = std::abs(ode_solve(Tensor::row({1.0}), ident, 0.0, 1.0, SolverConfig{}).h_end[0] - e) / e;

  const Dynamics smooth = [](double t, const Tensor& h) {
    Tensor out = h;
    for (std::size_t i = 0; i < h.numel(); ++i) out[i] = std::cos(t) * h[i] - 0.5 * h[i] * h[i] * h[i];
    return out;
  };
  SolverConfig ref;
  ref.rtol = 1e-13;
  ref.atol = 1e-15;
  const Tensor h0 = Tensor::row({1.0});
  const double exact = dopri5_adaptive(h0, smooth, 0.0, 2.0, ref).h_end[0];
  // Least-squares slope of log2|err| against log2(1/h). The dopri5 error
  // changes sign between 20 and 40 steps, so a single halving misleads.
  auto order = [&](auto solve) {
    const std::vector<int> steps{10, 20, 40, 80};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int n : steps) {
      const double x = std::log2(double(n)), y = -std::log2(std::abs(solve(n) - exact));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double k = static_cast<double>(steps.size());
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
  };
  const double p_rk4 = order([&](int n) { return rk4_solve(h0, smooth, 0, 2, n).h_end[0]; });
  const double p_dp5 = order([&](int n) { return dopri5_fixed(h0, smooth, 0, 2, n).h_end[0]; });
  return {err_e < kExpRelTol && p_dp5 >= kDopri5MinOrder && p_rk4 >= kRk4MinOrder,
          "e rel err " + fmt("%.2e", err_e) + ", order dopri5 " + fmt("%.2f", p_dp5) + ", rk4 " + fmt("%.2f", p_rk4)};
}

Outcome invertibility() {
  Rng rng(3003);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int k = 0; k < kInvertFields; ++k) {
    VectorField field("f", 4, {16}, rng);
    Tensor h0(Shape{4});
    for (auto& v : h0.storage()) v = n01(rng);
    const double t1 = 0.5 + 0.02 * k;
    const auto fwd = ode_solve(h0, field.dynamics(), 0.0, t1, SolverConfig{});
    const auto back = ode_solve(fwd.h_end, field.dynamics(), t1, 0.0, SolverConfig{});
    worst = std::max(worst, norm2(back.h_end - h0) / (1.0 + norm2(h0)));
  }
  return {worst < kInvertTol, "max round-trip err / (1+|h0|) " + fmt("%.2e", worst) + " over " +
                                  std::to_string(kInvertFields) + " fields"};
}

double nt_xent_reference(const Tensor& v, double tau) {
  const std::size_t m = v.rows(), d = v.cols(), n = m / 2;
  auto sim = [&](std::size_t a, std::size_t b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t c = 0; c < d; ++c) {
      ab += v.at(a, c) * v.at(b, c);
      aa += v.at(a, c) * v.at(a, c);
      bb += v.at(b, c) * v.at(b, c);
    }
    return ab / std::sqrt(aa * bb);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pos = i < n ? i + n : i - n;
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total -= std::log(std::exp(sim(i, pos) / tau) / denom);
  }
  return total / static_cast<double>(m);
}

Outcome loss_oracles() {
  double worst = 0.0;
  auto nt = [](const Tensor& v, double tau) {
    Tape tape;
    return nt_xent_loss(tape.leaf(v), tau).value().item();
  };
  // All identical embeddings: every similarity equals 1.
  for (double tau : {0.1, 0.5, 2.0}) {
    const Tensor same = Tensor::matrix(4, 2, {1, 2, 1, 2, 1, 2, 1, 2});
    worst = std::max(worst, std::abs(nt(same, tau) - std::log(3.0)));
  }
  // Aligned positives, orthogonal negatives, tau = 0.5.
  const Tensor ortho = Tensor::matrix(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  const double e2 = std::exp(2.0);
  worst = std::max(worst, std::abs(nt(ortho, 0.5) + std::log(e2 / (e2 + 2.0))));
  std::mt19937_64 r(4004);
  for (std::size_t n : {2u, 3u}) {
    for (int k = 0; k < 10; ++k) {
      const Tensor v = random_tensor({2 * n, 3}, r);
      worst = std::max(worst, std::abs(nt(v, 0.5) - nt_xent_reference(v, 0.5)));
    }
  }
  const double nt_worst = worst;

  // normalized_mse on fixed 2-dim latents.
  {
    Tape tape;
    const double got =
        normalized_mse(tape.leaf(Tensor::matrix(2, 2, {3, 4, 1, 1})), Tensor::matrix(2, 2, {1, 0, -2, 0})).value().item();
    worst = std::max(worst, std::abs(got - 0.5 * (0.8 + 2.0 + std::sqrt(2.0))));
  }
  // byol_losses with a 2-dim latent against direct arithmetic on the same nets.
  ModelConfig mc;
  mc.obs_dim = 3;
  mc.encoder_widths = {4};
  mc.projector_hidden = 4;
  mc.latent_dim = 2;
  mc.field_hidden = {4};
  Rng rng(4005);
  TimeAwareModel m(mc, rng);
  EmaPair target = make_target(m, 0.99, false);
  for (auto* p : target.parameters())
    for (auto& v : p->value.storage()) v += 0.05;
  const Tensor xi = random_tensor({3, 3}, r), xn = random_tensor({3, 3}, r);
  const std::vector<double> ti{0.0, 0.4, 1.0}, tn{1.2, 0.9, 2.5};
  ForwardOptions opts;
  opts.solver.method = SolverMethod::rk4;
  opts.solver.fixed_step_count = 16;
  Tape tape;
  const ByolLosses l = byol_losses(tape, m, target, xi, xn, ti, tn, true, opts);
  const Tensor on_i = m.embed(xi), on_n = m.embed(xn);
  const Tensor tg_i = target.projector.apply(m.encoder.apply(xi));
  const Tensor tg_n = target.projector.apply(m.encoder.apply(xn));
  auto nmse_row = [](const Tensor& p, const Tensor& q, std::size_t row) {
    const double np = std::hypot(p[0], p[1]);
    const double nq = std::hypot(q.at(row, 0), q.at(row, 1));
    return std::pow(p[0] / np - q.at(row, 0) / nq, 2) + std::pow(p[1] / np - q.at(row, 1) / nq, 2);
  };
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t row = 0; row < 3; ++row) {
    const Tensor a = Tensor::row({on_i.at(row, 0), on_i.at(row, 1)});
    const Tensor b = Tensor::row({on_n.at(row, 0), on_n.at(row, 1)});
    fwd += nmse_row(rk4_solve(a, m.field.dynamics(), ti[row], tn[row], 16).h_end, tg_n, row);
    bwd += nmse_row(rk4_solve(b, m.field.dynamics(), tn[row], ti[row], 16).h_end, tg_i, row);
  }
  const double byol_err = std::max(std::abs(l.forward.value().item() - fwd / 3.0),
                                   std::abs(l.backward->value().item() - bwd / 3.0));
  worst = std::max(worst, byol_err);

  // EMA towards a constant online value converges as alpha^k.
  Parameter xi_p{"xi", Tensor::row({1.0})};
  Parameter mu_p{"mu", Tensor::row({0.0})};
  double ema_worst = 0.0;
  for (int k = 1; k <= 50; ++k) {
    ema_update({&xi_p}, {&mu_p}, 0.9);
    ema_worst = std::max(ema_worst, std::abs(xi_p.value[0] - std::pow(0.9, k)));
  }
  return {worst < kLossTol && ema_worst < kEmaTol,
          "nt_xent err " + fmt("%.1e", nt_worst) + ", byol err " + fmt("%.1e", byol_err) + ", ema err " +
              fmt("%.1e", ema_worst)};
}

double ks_uniform_pvalue(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dmax = std::max(dmax, static_cast<double>(i + 1) / n - u[i]);
    dmax = std::max(dmax, u[i] - static_cast<double>(i) / n);
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * dmax;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

Outcome delta_contract() {
  Rng rng(5005);
  std::mt19937_64 r(5006);
  std::uniform_int_distribution<int> grade(0, 4);
  std::uniform_real_distribution<double> gap(0.1, 3.0);
  DeltaConfig cfg;
  double worst_sum = 0.0;
  for (int k = 0; k < kDeltaDraws; ++k) {
    const double t0 = gap(r);
    const auto a = compute_delta(grade(r), grade(r), t0, t0 + gap(r), cfg, rng);
    worst_sum = std::max(worst_sum, std::abs(a.delta_plus + a.delta_minus - a.delta));
  }
  std::vector<double> u;
  for (int k = 0; k < kDeltaDraws; ++k) {
    const auto a = compute_delta(2, 3, 0.0, 1.0, cfg, rng);
    u.push_back(a.delta_plus / a.delta);
  }
  const double p = ks_uniform_pvalue(u);
  const double stable = compute_delta(2, 2, 0.0, 1.0, cfg, rng).delta;
  return {worst_sum == 0.0 && p > kKsMinP && stable == kDefaultDelta,
          "max |d+ + d- - d| " + fmt("%.1e", worst_sum) + ", KS p " + fmt("%.3f", p) + ", r=0 delta " +
              fmt("%.4f", stable)};
}

Outcome metric_correctness() {
  double worst = 0.0;
  worst = std::max(worst, std::abs(auc({0.9, 0.4, 0.5, 0.1}, {1, 1, 0, 0}) - 0.75));
  worst = std::max(worst, std::abs(auc({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}) - 0.5));
  worst = std::max(worst, std::abs(quadratic_weighted_kappa({0, 1, 2, 2}, {0, 1, 2, 3}) - 0.875));
  worst = std::max(worst, std::abs(quadratic_weighted_kappa({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}) - 1.0));
  std::mt19937_64 r(10010);
  std::uniform_int_distribution<int> g(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial);
    std::vector<double> s(n);
    std::vector<int> y(n), p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(g(r)) / 4.0;  // coarse scores: many ties
      y[i] = static_cast<int>(r() % 2);
      t[i] = g(r);
      p[i] = std::clamp(t[i] + g(r) / 2 - 1, 0, 4);
    }
    y[0] = 0;
    y[1] = 1;
    p[0] = 0;
    t[1] = 4;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    worst = std::max(worst, std::abs(auc(s, y) - wins / pairs));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += double((p[i] - t[i]) * (p[i] - t[i]));
      for (std::size_t j = 0; j < n; ++j) den += double((t[i] - p[j]) * (t[i] - p[j]));
    }
    worst = std::max(worst, std::abs(quadratic_weighted_kappa(p, t) - (1.0 - num / (den / double(n)))));
  }
  return {worst < kMetricTol, "max deviation from brute force " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// Pipeline criteria.

struct Runner {
  fs::path work;
  ExperimentConfig base;

  ExperimentConfig with(std::uint64_t seed, HeadKind head, Scheme scheme, DeltaMode delta, bool tc) const {
    ExperimentConfig c = base;
    c.seed = seed;
    c.model.head = head;
    c.pretrain.scheme = scheme;
    c.pretrain.delta.mode = delta;
    c.pretrain.with_tc = tc;
    return c;
  }
};

struct GridResult {
  // (head, weights, seed) -> test metrics; absent when the run failed.
  std::map<std::tuple<std::string, std::string, std::uint64_t>, MetricSet> cells;
  std::vector<std::string> failures;
  double cpu_seconds = 0.0;
};

std::optional<fs::path> try_pretrain(const ExperimentConfig& c, const fs::path& dir, GridResult& out) {
  try {
    return run_pretrain(c, dir).paths.checkpoint();
  } catch (const std::exception& e) {
    out.failures.push_back(dir.string() + ": " + e.what());
    return std::nullopt;
  }
}

void try_finetune(const ExperimentConfig& c, const std::optional<fs::path>& ckpt, bool scratch, const fs::path& dir,
                  const std::string& weights, GridResult& out) {
  if (!scratch && !ckpt) return;  // its pre-training already failed
  try {
    const RunRecord rec = run_finetune(c, scratch ? std::nullopt : ckpt, dir);
    if (rec.metrics) out.cells[{to_string(c.model.head), weights, c.seed}] = *rec.metrics;
  } catch (const std::exception& e) {
    out.failures.push_back(dir.string() + ": " + e.what());
  }
}

GridResult run_table_grid(const Runner& run) {
  GridResult g;
  const double cpu0 = cpu_seconds();
  for (auto seed : kSeeds) {
    const fs::path sd = run.work / ("seed" + std::to_string(seed));
    const auto byol = try_pretrain(run.with(seed, HeadKind::node, Scheme::byol_tetc, DeltaMode::aligned, true),
                                   sd / "pretrain-byol_tetc", g);
    const auto simclr = try_pretrain(run.with(seed, HeadKind::node, Scheme::simclr_dpa, DeltaMode::aligned, true),
                                     sd / "pretrain-simclr_dpa", g);
    for (auto head : {HeadKind::node, HeadKind::node_gru}) {
      const std::string h = to_string(head);
      try_finetune(run.with(seed, head, Scheme::byol_tetc, DeltaMode::aligned, true), std::nullopt, true,
                   sd / (h + "-scratch"), "scratch", g);
      try_finetune(run.with(seed, head, Scheme::byol_tetc, DeltaMode::aligned, true), byol, false,
                   sd / (h + "-byol_tetc"), "byol_tetc", g);
      try_finetune(run.with(seed, head, Scheme::simclr_dpa, DeltaMode::aligned, true), simclr, false,
                   sd / (h + "-simclr_dpa"), "simclr_dpa", g);
    }
  }
  g.cpu_seconds = cpu_seconds() - cpu0;
  return g;
}

void run_ablation_extras(const Runner& run, GridResult& g) {
  for (auto seed : kSeeds) {
    const fs::path sd = run.work / ("seed" + std::to_string(seed));
    const auto notc = try_pretrain(run.with(seed, HeadKind::node, Scheme::byol_tetc, DeltaMode::aligned, false),
                                   sd / "pretrain-byol_tetc-notc", g);
    try_finetune(run.with(seed, HeadKind::node, Scheme::byol_tetc, DeltaMode::aligned, false), notc, false,
                 sd / "node-byol_tetc-notc", "byol_tetc tc=no", g);
    const auto unal = try_pretrain(run.with(seed, HeadKind::node, Scheme::simclr_dpa, DeltaMode::unaligned, true),
                                   sd / "pretrain-simclr_dpa-unaligned", g);
    try_finetune(run.with(seed, HeadKind::node, Scheme::simclr_dpa, DeltaMode::unaligned, true), unal, false,
                 sd / "node-simclr_dpa-unaligned", "simclr_dpa delta=unaligned", g);
  }
}

std::optional<double> mean_of(const GridResult& g, const std::string& head, const std::string& weights,
                              std::optional<double> MetricSet::*metric) {
  double sum = 0.0;
  for (auto seed : kSeeds) {
    auto it = g.cells.find({head, weights, seed});
    if (it == g.cells.end() || !(it->second.*metric)) return std::nullopt;
    sum += *(it->second.*metric);
  }
  return sum / static_cast<double>(kSeeds.size());
}

Outcome directional_tables(const GridResult& g) {
  bool pass = g.cpu_seconds < kGridMaxCpuSeconds;
  std::ostringstream os;
  for (const char* head : {"node", "node_gru"}) {
    const auto s = mean_of(g, head, "scratch", &MetricSet::auc2);
    const auto b = mean_of(g, head, "byol_tetc", &MetricSet::auc2);
    const auto c = mean_of(g, head, "simclr_dpa", &MetricSet::auc2);
    if (!s || !b || !c) {
      pass = false;
      os << head << ": missing runs; ";
      continue;
    }
    pass = pass && (*b - *s >= kByolMinGain) && (*c - *s >= kSimclrMinGain);
    os << head << " AUC2 scratch " << fmt("%.4f", *s) << ", byol " << fmt("%+.4f", *b - *s) << ", simclr "
       << fmt("%+.4f", *c - *s) << "; ";
  }
  os << "grid cpu " << fmt("%.0f", g.cpu_seconds) << " s";
  return {pass, os.str()};
}

Outcome ablation_direction(const GridResult& g) {
  int wins = 0, compared = 0;
  std::ostringstream os;
  for (auto seed : kSeeds) {
    auto tc = g.cells.find({"node", "byol_tetc", seed});
    auto no = g.cells.find({"node", "byol_tetc tc=no", seed});
    if (tc == g.cells.end() || no == g.cells.end() || !tc->second.auc2 || !no->second.auc2) continue;
    ++compared;
    wins += *tc->second.auc2 > *no->second.auc2;
    os << "seed " << seed << " AUC2 tc " << fmt("%.4f", *tc->second.auc2) << " vs no-tc "
       << fmt("%.4f", *no->second.auc2) << "; ";
  }
  const auto aligned = mean_of(g, "node", "simclr_dpa", &MetricSet::auc3);
  const auto unaligned = mean_of(g, "node", "simclr_dpa delta=unaligned", &MetricSet::auc3);
  const bool align_ok = aligned && unaligned && *aligned >= *unaligned;
  if (aligned && unaligned)
    os << "mean AUC3 aligned " << fmt("%.4f", *aligned) << " vs unaligned " << fmt("%.4f", *unaligned);
  else
    os << "aligned/unaligned runs missing";
  return {compared == static_cast<int>(kSeeds.size()) && wins >= kTcMinWins && align_ok,
          "tc wins " + std::to_string(wins) + "/" + std::to_string(compared) + "; " + os.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TAHEAD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Every metric written under `root` is a finite number or explicitly absent.
std::string silent_nan_scan(const fs::path& root, int& files) {
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().filename() != "run.json" && entry.path().filename() != "metrics.json") continue;
    ++files;
    std::function<std::string(const json&, const std::string&)> walk = [&](const json& j, const std::string& where) {
      if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
          const bool metric = k == "kappa" || k == "AUC1" || k == "AUC2" || k == "AUC3" || k == "loss";
          if (metric && !v.is_number()) return entry.path().string() + ": " + where + k + " is not a number";
          if (auto bad = walk(v, where + k + "."); !bad.empty()) return bad;
        }
      } else if (j.is_array()) {
        for (const auto& v : j)
          if (auto bad = walk(v, where); !bad.empty()) return bad;
      } else if (j.is_number_float() && !std::isfinite(j.get<double>())) {
        return entry.path().string() + ": non-finite value at " + where;
      }
      return std::string();
    };
    const json j = json::parse(read_text(entry.path()));
    // A failed run has no metrics at all; that is recorded, not silent.
    if (entry.path().filename() == "run.json" && j.contains("error")) continue;
    if (auto bad = walk(j.contains("metrics") ? j["metrics"] : j, ""); !bad.empty()) return bad;
  }
  return {};
}

Outcome stability_observability(const Runner& run, const fs::path& scan_root) {
  const fs::path dir = run.work / "unstable";
  fs::remove_all(dir);
  const std::string args = std::string("-c ") + DESK_CONFIG + " --seed 1 --head node --finetune-lr " +
                           fmt("%g", kUnstableLr) + " --set output_dir=" + dir.string() + " finetune --out " +
                           (dir / "run").string();
  const int code = run_cli(args);
  std::ostringstream os;
  os << "exit code " << code;
  bool report_ok = false;
  if (fs::exists(dir / "run" / "stability.json")) {
    const json st = json::parse(read_text(dir / "run" / "stability.json"));
    report_ok = st.value("diverged", false) && st.contains("divergence_step");
    if (report_ok)
      os << ", stability report: " << st["divergence_kind"].get<std::string>() << " at epoch "
         << st["divergence_epoch"] << " step " << st["divergence_step"];
    else
      os << ", stability report shows no divergence (max grad norm " << st["max_grad_norm"] << ", "
         << st["steps"] << " steps)";
  } else {
    os << ", no stability report";
  }
  int files = 0;
  const std::string bad = silent_nan_scan(scan_root, files);
  os << "; scanned " << files << " metric files" << (bad.empty() ? ", no silent NaN" : ", " + bad);
  return {code == kDivergenceExit && report_ok && bad.empty(), os.str()};
}

Outcome reproducibility(const Runner& run) {
  ExperimentConfig c = run.base;
  c.cohort.n_patients = 200;
  c.pretrain.epochs = 3;
  c.finetune.epochs = 3;
  c.model.head = HeadKind::node_gru;
  std::vector<std::string> digests, metrics, curves;
  for (int k = 0; k < 2; ++k) {
    const fs::path d = run.work / "repro" / ("run" + std::to_string(k));
    fs::remove_all(d);
    const RunRecord pre = run_pretrain(c, d / "pretrain");
    const RunRecord fin = run_finetune(c, pre.paths.checkpoint(), d / "finetune");
    digests.push_back(*pre.checkpoint_digest + "/" + *fin.checkpoint_digest);
    metrics.push_back(read_text(fin.paths.metrics()));
    curves.push_back(read_text(pre.paths.loss_curve()) + read_text(fin.paths.loss_curve()));
  }
  const bool same = digests[0] == digests[1] && metrics[0] == metrics[1] && curves[0] == curves[1];
  return {same, "checkpoint digests " + digests[0] + (digests[0] == digests[1] ? " == " : " != ") + digests[1] +
                    ", metrics " + (metrics[0] == metrics[1] ? "identical" : "differ") + ", loss curves " +
                    (curves[0] == curves[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "tahead_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  auto selected = [&](int id) { return only.empty() || only.contains(id); };
  fs::create_directories(work);
  Runner runner{work, load_config(DESK_CONFIG)};

  int failed = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " (" << o.detail << ")"
              << std::endl;
    failed += o.pass ? 0 : 1;
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!selected(id)) return;
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded(1, "gradient oracle triangle", gradient_triangle);
  guarded(2, "solver accuracy and convergence order", solver_accuracy);
  guarded(3, "forward/reverse invertibility", invertibility);
  guarded(4, "loss oracles", loss_oracles);
  guarded(5, "delta augmentation contract", delta_contract);

  GridResult grid;
  const fs::path grid_root = work / "grid";
  Runner grid_runner{grid_root, runner.base};
  if (selected(6) || selected(7)) {
    fs::remove_all(grid_root);
    grid = run_table_grid(grid_runner);
    std::vector<fs::path> dirs;
    for (const auto& e : fs::recursive_directory_iterator(grid_root))
      if (e.path().filename() == "run.json") dirs.push_back(e.path().parent_path());
    std::sort(dirs.begin(), dirs.end());
    const MetricTable table = collect_report(dirs);
    write_text(grid_root / "table.txt", table.to_text());
    std::cout << table.to_text();
    if (selected(7)) run_ablation_extras(grid_runner, grid);
    for (const auto& f : grid.failures) std::cout << "run failed: " << f << '\n';
  }
  guarded(6, "pre-training gains over scratch on task 2", [&] { return directional_tables(grid); });
  guarded(7, "ablation direction", [&] { return ablation_direction(grid); });
  guarded(8, "stability observability", [&] { return stability_observability(runner, work); });
  guarded(9, "bit-identical reruns", [&] { return reproducibility(runner); });
  guarded(10, "metric correctness", metric_correctness);
  return failed == 0 ? 0 : 1;
}
