// SPDX-License-Identifier: Apache-2.0
#include "tahead/field.hpp"

#include "tahead/errors.hpp"
#include "tahead/ops.hpp"

namespace tahead {
namespace {

Tensor with_time_column(const Tensor& h, const std::vector<double>& t_rows) {
  const std::size_t rows = h.rows(), cols = h.cols();
  Tensor x(Shape{rows, cols + 1});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) x.at(r, c) = h[r * cols + c];
    x.at(r, cols) = t_rows[r];
  }
  return x;
}

}  // namespace

VectorField::VectorField(const std::string& name, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                         Rng& rng) {
  std::vector<std::size_t> dims{latent_dim + 1};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(latent_dim);
  net_ = DenseNet(name, dims, Activation::tanh, Activation::identity, rng);
}

VectorField::VectorField(DenseNet net) : net_(std::move(net)) {
  require(net_.in_dim() == net_.out_dim() + 1, "VectorField: net must map d+1 -> d");
}

Tensor VectorField::eval(double t, const Tensor& h) const {
  return eval_rows(h, std::vector<double>(h.rows(), t));
}

Tensor VectorField::eval_rows(const Tensor& h, const std::vector<double>& t_rows) const {
  require(h.cols() == latent_dim(), "VectorField: latent width mismatch");
  require(t_rows.size() == h.rows(), "VectorField: need one time per row");
  Tensor out = net_.apply(with_time_column(h, t_rows));
  return out.reshaped(h.shape());
}

Var VectorField::record(Tape& tape, double t, Var h) {
  return record_rows(tape, h, std::vector<double>(h.value().rows(), t));
}

Var VectorField::record_rows(Tape& tape, Var h, const std::vector<double>& t_rows) {
  const Tensor& hv = h.value();
  require(hv.cols() == latent_dim(), "VectorField: latent width mismatch");
  require(t_rows.size() == hv.rows(), "VectorField: need one time per row");
  Tensor tcol(Shape{hv.rows(), 1}, t_rows);
  Var x = ops::concat_cols({h, tape.constant(std::move(tcol))});
  Var out = net_.forward(tape, x);
  if (hv.rank() < 2) return ops::reshape(out, hv.shape());
  return out;
}

BatchedFlow::BatchedFlow(VectorField& field, std::vector<double> start, std::vector<double> span)
    : field_(&field), start_(std::move(start)), span_(std::move(span)) {
  require(start_.size() == span_.size(), "BatchedFlow: start/span size mismatch");
}

bool BatchedFlow::all_frozen() const noexcept {
  for (double s : span_)
    if (s != 0.0) return false;
  return true;
}

std::vector<double> BatchedFlow::times_at(double s) const {
  std::vector<double> t(start_.size());
  for (std::size_t r = 0; r < t.size(); ++r) t[r] = start_[r] + s * span_[r];
  return t;
}

Tensor BatchedFlow::eval(double s, const Tensor& h) const {
  require(h.rows() == start_.size(), "BatchedFlow: batch size mismatch");
  Tensor u = field_->eval_rows(h, times_at(s));
  const std::size_t cols = h.cols();
  for (std::size_t r = 0; r < start_.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) u[r * cols + c] *= span_[r];
  return u;
}

Var BatchedFlow::record(Tape& tape, double s, Var h) {
  require(h.value().rows() == start_.size(), "BatchedFlow: batch size mismatch");
  Var u = field_->record_rows(tape, h, times_at(s));
  Var w = tape.constant(Tensor(Shape{span_.size(), 1}, span_));
  return ops::mul(u, w);
}

}  // namespace tahead
