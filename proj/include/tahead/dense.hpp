// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tahead/tape.hpp"

namespace tahead {

using Rng = std::mt19937_64;

enum class Activation { identity, tanh };

struct DenseLayer {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
  Activation activation = Activation::identity;
};

/// Stack of affine layers. Hidden layers use `hidden`, the last uses `output`.
///
/// Weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
class DenseNet {
 public:
  DenseNet() = default;
  /// `dims` = {in, hidden..., out}; needs at least two entries.
  DenseNet(const std::string& name, const std::vector<std::size_t>& dims, Activation hidden, Activation output,
           Rng& rng);
  /// Build from explicit layers (tests, checkpoints). Dims must chain.
  explicit DenseNet(std::vector<DenseLayer> layers);

  Var forward(Tape& tape, Var x);
  /// Same computation without recording.
  Tensor apply(const Tensor& x) const;

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  std::vector<DenseLayer> layers_;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
};

}  // namespace tahead
