// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tahead/cells.hpp"
#include "tahead/field.hpp"

namespace tahead {

enum class HeadKind { node, node_rnn, node_gru, node_lstm };

std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);
std::optional<CellKind> cell_for(HeadKind k);

inline constexpr std::size_t kNumGrades = 5;

struct ModelConfig {
  std::size_t obs_dim = 32;
  std::vector<std::size_t> encoder_widths{128, 64};  // last entry is the representation width
  std::size_t projector_hidden = 64;
  std::size_t latent_dim = 32;
  std::vector<std::size_t> field_hidden{64, 64};
  HeadKind head = HeadKind::node;
};

/// How ODE solves inside a model are integrated and differentiated.
struct ForwardOptions {
  SolverConfig solver;
  GradMode grad_mode = GradMode::adjoint;
};

/// Encoder f, projector g, time-aware head u (+ optional observation cell)
/// and a linear severity classifier.
///
/// Parameter names are prefixed by component ("encoder.", "projector.",
/// "field.", "cell.", "classifier.") and are unique within a model.
class TimeAwareModel {
 public:
  TimeAwareModel(const ModelConfig& cfg, Rng& rng);

  /// h = g(f(x)).
  Var embed(Tape& tape, Var x);
  Tensor embed(const Tensor& x) const;

  const ModelConfig& config() const noexcept { return cfg_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Encoder, projector and field: the weights shared with pre-training.
  std::vector<Parameter*> backbone_parameters();

  DenseNet encoder;
  DenseNet projector;
  VectorField field;
  std::optional<RecurrentCell> cell;
  DenseNet classifier;

 private:
  ModelConfig cfg_;
};

/// Right-aligned batch of visit sequences. Row r is active at step j when
/// active[j][r] != 0; a row's active steps are contiguous and end at the last
/// step, with strictly increasing times.
struct SequenceBatch {
  std::size_t batch = 0;
  std::vector<Tensor> obs;                               // per step, [batch, obs_dim]
  std::vector<std::vector<double>> times;                // per step, per row
  std::vector<std::vector<unsigned char>> active;        // per step, per row

  std::size_t steps() const noexcept { return obs.size(); }
  void validate() const;
};

struct RolloutResult {
  Var h;                           // latent after ingesting each row's last visit
  std::vector<double> last_time;   // that visit's time
};

/// ODE-RNN rollout: the first visit sets h = g(f(x)); each later visit first
/// evolves h through the ODE to the visit time, then (with a cell) updates it
/// from g(f(x)). Without a cell later visits only advance the clock, which is a
/// plain NODE from the first visit's latent.
RolloutResult ode_rnn_rollout(Tape& tape, TimeAwareModel& model, const SequenceBatch& seq,
                              const ForwardOptions& opts);

/// Single-sequence convenience form. Throws ContractViolation unless times
/// are strictly increasing.
Tensor ode_rnn_rollout(TimeAwareModel& model, const std::vector<std::pair<double, Tensor>>& visits,
                       const ForwardOptions& opts);

/// Evolve each row from from[r] to to[r] with the model's field.
Var predict_latent_rows(Tape& tape, VectorField& field, Var h, const std::vector<double>& from,
                        const std::vector<double>& to, const ForwardOptions& opts);

/// h'(t_target) from h(t_i). Identity when t_target == t_i.
Tensor predict_latent(const Tensor& h, double t_i, double t_target, VectorField& field, const SolverConfig& cfg);

/// Severity logits [B, 5].
Var classify(Tape& tape, DenseNet& head, Var h);

/// Tail probabilities P(grade >= k), k = 1..3, from logits: [B, 3].
Tensor tail_scores(const Tensor& logits);
std::vector<int> argmax_grades(const Tensor& logits);

}  // namespace tahead
