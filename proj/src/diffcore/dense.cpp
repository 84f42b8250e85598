// SPDX-License-Identifier: Apache-2.0
#include "tahead/dense.hpp"

#include <Eigen/Core>
#include <cmath>

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {

DenseNet::DenseNet(const std::string& name, const std::vector<std::size_t>& dims, Activation hidden,
                   Activation output, Rng& rng) {
  require(dims.size() >= 2, "DenseNet needs at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    require(in > 0 && out > 0, "DenseNet dims must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight.name = name + ".l" + std::to_string(l) + ".weight";
    layer.weight.value = Tensor(Shape{in, out});
    for (auto& w : layer.weight.value.storage()) w = u(rng);
    layer.bias.name = name + ".l" + std::to_string(l) + ".bias";
    layer.bias.value = Tensor(Shape{out});
    for (auto& b : layer.bias.value.storage()) b = u(rng);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    layers_.push_back(std::move(layer));
  }
  in_dim_ = dims.front();
  out_dim_ = dims.back();
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "DenseNet needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& w = layers_[l].weight.value;
    require(w.rank() == 2, "DenseNet weight must be rank 2");
    require(layers_[l].bias.value.numel() == w.cols(), "DenseNet bias/weight mismatch");
    if (l > 0) require(layers_[l - 1].weight.value.cols() == w.rows(), "DenseNet layer dims do not chain");
    require(w.all_finite() && layers_[l].bias.value.all_finite(), "DenseNet weights must be finite");
  }
  in_dim_ = layers_.front().weight.value.rows();
  out_dim_ = layers_.back().weight.value.cols();
}

Var DenseNet::forward(Tape& tape, Var x) {
  if (x.value().cols() != in_dim_)
    throw ContractViolation("DenseNet::forward: input width " + std::to_string(x.value().cols()) + " != in_dim " +
                            std::to_string(in_dim_));
  Var h = x;
  for (auto& layer : layers_) {
    h = ops::add(ops::matmul(h, tape.param(layer.weight)), tape.param(layer.bias));
    if (layer.activation == Activation::tanh) h = ops::tanh(h);
  }
  return h;
}

Tensor DenseNet::apply(const Tensor& x) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (x.cols() != in_dim_)
    throw ContractViolation("DenseNet::apply: input width " + std::to_string(x.cols()) + " != in_dim " +
                            std::to_string(in_dim_));
  const auto rows = Eigen::Index(x.rows());
  RowMat h = Eigen::Map<const RowMat>(x.data().data(), rows, Eigen::Index(x.cols()));
  for (const auto& layer : layers_) {
    const auto& w = layer.weight.value;
    Eigen::Map<const RowMat> wm(w.data().data(), Eigen::Index(w.rows()), Eigen::Index(w.cols()));
    Eigen::Map<const Eigen::RowVectorXd> bm(layer.bias.value.data().data(), Eigen::Index(w.cols()));
    RowMat next = h * wm;
    next.rowwise() += bm;
    if (layer.activation == Activation::tanh) next = next.array().tanh();
    h = std::move(next);
  }
  Tensor out(Shape{x.rows(), out_dim_});
  Eigen::Map<RowMat>(out.data().data(), rows, Eigen::Index(out_dim_)) = h;
  if (!out.all_finite()) throw NonFiniteError("DenseNet::apply produced NaN/Inf");
  return out;
}

std::vector<Parameter*> DenseNet::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> DenseNet::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace tahead
