// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tahead/tensor.hpp"

namespace tahead {

/// ROC AUC as the normalised Mann-Whitney statistic,
/// P(score_pos > score_neg) + 1/2 P(tie). Labels are 0/1. Throws
/// UndefinedMetric unless both classes are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};
/// ROC curve vertices from (0,0) to (1,1), one per distinct score.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

/// Cohen's kappa with quadratic weights (i-j)^2/(K-1)^2. Exact agreement
/// gives 1. Throws ContractViolation on empty input or out-of-range grades.
double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth, int num_grades = 5);

/// kappa and AUC for grade >= 1, 2, 3. Undefined entries stay empty and are
/// named in `undefined`.
struct MetricSet {
  std::optional<double> kappa;
  std::optional<double> auc1;
  std::optional<double> auc2;
  std::optional<double> auc3;
  std::vector<std::string> undefined;

  std::optional<double> get(const std::string& column) const;
};

/// `tail` is [N, 3] with P(grade >= k), k = 1..3.
MetricSet evaluate_predictions(const Tensor& tail, const std::vector<int>& pred, const std::vector<int>& truth);

struct TableRow {
  std::string method;
  std::string weights;
  std::string task;
  MetricSet metrics;
};

/// Result table in fixed column order: kappa, AUC1, AUC2, AUC3.
struct MetricTable {
  std::vector<TableRow> rows;

  static const std::vector<std::string>& columns();
  /// JSON array of row objects; undefined metrics are omitted, not zeroed.
  std::string to_json() const;
  /// Aligned plain text; undefined metrics render as "-".
  std::string to_text() const;
};

/// Sort runs into the method x weights grid order used by the result
/// tables; rows outside the grid keep their input order at the end.
MetricTable metric_table(std::vector<TableRow> runs);

}  // namespace tahead
