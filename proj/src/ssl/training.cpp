// SPDX-License-Identifier: Apache-2.0
#include "tahead/training.hpp"

#include <algorithm>
#include <numeric>

#include "tahead/errors.hpp"
#include "tahead/rng.hpp"

namespace tahead {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    long epoch, std::size_t min_batch) {
  require(batch_size >= 1, "epoch_batches: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "epoch-order", static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < min_batch) break;
    out.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  return out;
}

void guarded_step(StabilityReport& report, long epoch, long step, const std::function<void()>& body) {
  auto fail = [&](const std::string& kind, const std::string& what) {
    report.diverged = true;
    report.nan_events += kind == "non_finite" ? 1 : 0;
    report.divergence_epoch = epoch;
    report.divergence_step = step;
    report.divergence_kind = kind;
    report.message = what;
    throw TrainingDivergence("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + " (" + kind + "): " + what,
                             static_cast<int>(epoch), step, kind);
  };
  try {
    body();
  } catch (const NonFiniteError& e) {
    fail("non_finite", e.what());
  } catch (const SolverDivergence& e) {
    fail("solver_divergence", e.what());
  } catch (const SolverInstability& e) {
    fail("solver_instability", e.what());
  }
}

}  // namespace tahead
