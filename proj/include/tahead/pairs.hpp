// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tahead/tensor.hpp"

namespace tahead {

/// Two consecutive visits of the same eye, x_i scanned before x_next.
struct VisitPair {
  std::string patient_id;
  char eye = 'L';
  std::size_t index = 0;  // position of the first visit in the trajectory
  Tensor x_i;
  Tensor x_next;
  double t_i = 0.0;
  double t_next = 0.0;
  int s_i = 0;
  int s_next = 0;

  double gap() const noexcept { return t_next - t_i; }
};

/// Stack the given rows of `pairs` into [n, obs] matrices.
Tensor stack_first(const std::vector<VisitPair>& pairs, const std::vector<std::size_t>& rows);
Tensor stack_next(const std::vector<VisitPair>& pairs, const std::vector<std::size_t>& rows);

}  // namespace tahead
