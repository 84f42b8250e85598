// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tahead {

/// Precondition or shape contract broken by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared in an op output.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Step budget exhausted or the step size underflowed while integrating.
class SolverDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The vector field produced a non-finite value during integration.
class SolverInstability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is undefined for the given labels (e.g. a single class for AUC).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training hit a non-finite loss/gradient or an unrecoverable solver failure.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(std::string what, int epoch, long step, std::string kind)
      : std::runtime_error(std::move(what)), epoch_(epoch), step_(step), kind_(std::move(kind)) {}

  int epoch() const noexcept { return epoch_; }
  long step() const noexcept { return step_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  int epoch_;
  long step_;
  std::string kind_;
};

/// Checkpoint file problems. Each failure mode has its own subclass.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Bad or unknown configuration keys/values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A task split ended up with no examples.
class EmptySplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace tahead
