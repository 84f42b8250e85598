// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tahead/tape.hpp"

// Differentiable primitives. Every op works on the matrix view of its inputs
// (see Tensor::rows/cols) and records its vector-Jacobian product on the tape
// of its first argument.
namespace tahead::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

/// Elementwise with 2-D broadcasting: each dim of `b` equals `a`'s or is 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);

/// Scalar reductions (rank-0 result).
Var sum(Var a);
Var mean(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);

/// Row-wise L2 normalisation. Throws ContractViolation on a zero row.
Var l2_normalize(Var a);

/// Row-wise log-softmax. Entries with mask[r*cols+c] == 0 are excluded from
/// the normaliser and come out as 0 with no gradient.
Var log_softmax(Var a, const std::vector<unsigned char>& mask = {});

/// out[r] = a[r, index[r]], shape [rows].
Var gather(Var a, const std::vector<std::size_t>& index);

}  // namespace tahead::ops
