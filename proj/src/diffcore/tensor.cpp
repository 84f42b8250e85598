// SPDX-License-Identifier: Apache-2.0
#include "tahead/tensor.hpp"

#include <cmath>
#include <sstream>

#include "tahead/errors.hpp"

namespace tahead {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ContractViolation("tensor: shape " + shape_str(shape_) + " does not match " +
                            std::to_string(data_.size()) + " values");
}

Tensor Tensor::row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() < 2) return 1;
  return shape_numel(Shape(shape_.begin(), shape_.end() - 1));
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractViolation("item: tensor has " + std::to_string(data_.size()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ContractViolation("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "tensor +: size mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "tensor -: size mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.storage()) v *= s;
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require(x.numel() == y.numel(), "axpy: size mismatch");
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += alpha * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace tahead
