// SPDX-License-Identifier: Apache-2.0
#include "tahead/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "tahead/errors.hpp"

namespace tahead::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) { return MapC(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }
Map view(Tensor& t) { return Map(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ContractViolation("op on a detached Var");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractViolation("op mixes Vars from different tapes");
}

// Broadcast bookkeeping for elementwise binary ops.
struct Bcast {
  std::size_t rows, cols, brows, bcols;
  std::size_t bi(std::size_t r, std::size_t c) const { return (brows == 1 ? 0 : r) * bcols + (bcols == 1 ? 0 : c); }
};

Bcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Bcast bc{a.rows(), a.cols(), b.rows(), b.cols()};
  const bool ok_r = bc.brows == bc.rows || bc.brows == 1;
  const bool ok_c = bc.bcols == bc.cols || bc.bcols == 1;
  if (!ok_r || !ok_c)
    throw ContractViolation(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                            shape_str(a.shape()));
  return bc;
}

template <class Fwd>
Tensor binary_forward(const Tensor& a, const Tensor& b, const Bcast& bc, Fwd f) {
  Tensor out(a.shape());
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c) out[r * bc.cols + c] = f(a[r * bc.cols + c], b[bc.bi(r, c)]);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw ContractViolation("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  Tensor out(Shape{av.rows(), bv.cols()});
  view(out).noalias() = view(av) * view(bv);
  const int ia = a.id, ib = b.id;
  return tape.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) view(t.grad_ref(ia)).noalias() += view(g) * view(t.value(ib)).transpose();
    if (t.requires_grad(ib)) view(t.grad_ref(ib)).noalias() += view(t.value(ia)).transpose() * view(g);
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(Shape{av.cols(), av.rows()});
  view(out) = view(av).transpose();
  const int ia = a.id;
  return tape.record("transpose", std::move(out), {ia}, [ia](Tape& t, int self) {
    view(t.grad_ref(ia)) += view(t.grad_of(self)).transpose();
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const int ia = a.id;
  return tape_of(a).record("reshape", std::move(out), {ia}, [ia](Tape& t, int self) {
    axpy(1.0, t.grad_of(self), t.grad_ref(ia));
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  const auto bc = broadcast(a.value(), b.value(), "add");
  Tensor out = binary_forward(a.value(), b.value(), bc, [](double x, double y) { return x + y; });
  const int ia = a.id, ib = b.id;
  return tape_of(a).record("add", std::move(out), {ia, ib}, [ia, ib, bc](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) axpy(1.0, g, t.grad_ref(ia));
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) gb[bc.bi(r, c)] += g[r * bc.cols + c];
    }
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  const auto bc = broadcast(a.value(), b.value(), "sub");
  Tensor out = binary_forward(a.value(), b.value(), bc, [](double x, double y) { return x - y; });
  const int ia = a.id, ib = b.id;
  return tape_of(a).record("sub", std::move(out), {ia, ib}, [ia, ib, bc](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) axpy(1.0, g, t.grad_ref(ia));
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) gb[bc.bi(r, c)] -= g[r * bc.cols + c];
    }
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  const auto bc = broadcast(a.value(), b.value(), "mul");
  Tensor out = binary_forward(a.value(), b.value(), bc, [](double x, double y) { return x * y; });
  const int ia = a.id, ib = b.id;
  return tape_of(a).record("mul", std::move(out), {ia, ib}, [ia, ib, bc](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) ga[r * bc.cols + c] += g[r * bc.cols + c] * bv[bc.bi(r, c)];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) gb[bc.bi(r, c)] += g[r * bc.cols + c] * av[r * bc.cols + c];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = s * a.value();
  const int ia = a.id;
  return tape_of(a).record("scale", std::move(out), {ia}, [ia, s](Tape& t, int self) {
    axpy(s, t.grad_of(self), t.grad_ref(ia));
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v = std::tanh(v);
  const int ia = a.id;
  return tape_of(a).record("tanh", std::move(out), {ia}, [ia](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  const int ia = a.id;
  return tape_of(a).record("sigmoid", std::move(out), {ia}, [ia](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const int ia = a.id;
  return tape_of(a).record("sum", Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
    const double g = t.grad_of(self)[0];
    for (auto& v : t.grad_ref(ia).storage()) v += g;
  });
}

Var mean(Var a) {
  const auto n = a.value().numel();
  if (n == 0) throw ContractViolation("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    if (p.value().rows() != rows) throw ContractViolation("concat_cols: row count mismatch");
    cols += p.value().cols();
  }
  Tensor out(Shape{rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    view(out).block(0, Eigen::Index(off), Eigen::Index(rows), Eigen::Index(v.cols())) = view(v);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols();
  }
  return tape_of(parts[0]).record("concat_cols", std::move(out), ids, [ids, offsets, rows](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gp = t.grad_ref(ids[k]);
      view(gp) += view(g).block(0, Eigen::Index(offsets[k]), Eigen::Index(rows), Eigen::Index(gp.cols()));
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    if (p.value().cols() != cols) throw ContractViolation("concat_rows: column count mismatch");
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  std::vector<int> ids;
  for (const auto& p : parts) {
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id);
  }
  return tape_of(parts[0]).record("concat_rows", Tensor(Shape{rows, cols}, std::move(data)), ids,
                                  [ids](Tape& t, int self) {
                                    const Tensor& g = t.grad_of(self);
                                    std::size_t off = 0;
                                    for (int id : ids) {
                                      const std::size_t n = t.value(id).numel();
                                      if (t.requires_grad(id)) {
                                        Tensor& gp = t.grad_ref(id);
                                        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                                      }
                                      off += n;
                                    }
                                  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.cols()) throw ContractViolation("slice_cols: out of range");
  const std::size_t rows = av.rows();
  Tensor out(Shape{rows, count});
  view(out) = view(av).block(0, Eigen::Index(start), Eigen::Index(rows), Eigen::Index(count));
  const int ia = a.id;
  return tape_of(a).record("slice_cols", std::move(out), {ia}, [ia, start, count, rows](Tape& t, int self) {
    view(t.grad_ref(ia)).block(0, Eigen::Index(start), Eigen::Index(rows), Eigen::Index(count)) +=
        view(t.grad_of(self));
  });
}

Var l2_normalize(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c] * av[r * cols + c];
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw ContractViolation("l2_normalize: zero-norm vector (degenerate latent)");
    norms[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] / n;
  }
  const int ia = a.id;
  return tape_of(a).record("l2_normalize", std::move(out), {ia}, [ia, norms, rows, cols](Tape& t, int self) {
    // d(x/|x|) = (g - y (y.g)) / |x|
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double yg = 0.0;
      for (std::size_t c = 0; c < cols; ++c) yg += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        ga[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * yg) / norms[r];
    }
  });
}

Var log_softmax(Var a, const std::vector<unsigned char>& mask) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (!mask.empty() && mask.size() != av.numel()) throw ContractViolation("log_softmax: mask size mismatch");
  auto on = [&mask](std::size_t i) { return mask.empty() || mask[i] != 0; };
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (on(r * cols + c)) mx = std::max(mx, av[r * cols + c]);
    if (!std::isfinite(mx)) throw ContractViolation("log_softmax: row with no unmasked entries");
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (on(r * cols + c)) s += std::exp(av[r * cols + c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = on(r * cols + c) ? av[r * cols + c] - lse : 0.0;
  }
  const int ia = a.id;
  return tape_of(a).record("log_softmax", std::move(out), {ia}, [ia, mask, rows, cols](Tape& t, int self) {
    auto on = [&mask](std::size_t i) { return mask.empty() || mask[i] != 0; };
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        if (on(r * cols + c)) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        if (on(i)) ga[i] += g[i] - std::exp(y[i]) * gs;
      }
    }
  });
}

Var gather(Var a, const std::vector<std::size_t>& index) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (index.size() != rows) throw ContractViolation("gather: need one index per row");
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= cols) throw ContractViolation("gather: index out of range");
    out[r] = av[r * cols + index[r]];
  }
  const int ia = a.id;
  return tape_of(a).record("gather", std::move(out), {ia}, [ia, index, cols](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < index.size(); ++r) ga[r * cols + index[r]] += g[r];
  });
}

}  // namespace tahead::ops
