// SPDX-License-Identifier: Apache-2.0
#include "tahead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "tahead/errors.hpp"

namespace tahead {

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t& pos,
                  std::size_t& neg) {
  require(scores.size() == labels.size(), "auc: scores and labels differ in length");
  pos = neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "auc: labels must be 0 or 1");
    require(std::isfinite(scores[i]), "auc: scores must be finite");
    (labels[i] ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw UndefinedMetric("auc: only one class present");
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t pos = 0, neg = 0;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Tied scores share their mean rank, which yields the 1/2 tie credit.
  // Ranks are kept doubled so every partial sum is an exact integer.
  double rank2_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank2 = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank2_pos += mean_rank2;
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank2_pos - np * (np + 1.0)) / (2.0 * np * nn);
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t pos = 0, neg = 0;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> out{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) (labels[order[j]] ? tp : fp) += 1;
    out.push_back({double(fp) / double(neg), double(tp) / double(pos)});
    i = j;
  }
  return out;
}

double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth, int num_grades) {
  require(num_grades >= 2, "kappa: need at least two grades");
  require(!pred.empty(), "kappa: empty input");
  require(pred.size() == truth.size(), "kappa: prediction and truth differ in length");
  const auto k = static_cast<std::size_t>(num_grades);
  std::vector<double> observed(k * k, 0.0), row(k, 0.0), col(k, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] >= 0 && pred[i] < num_grades && truth[i] >= 0 && truth[i] < num_grades,
            "kappa: grade out of range");
    observed[static_cast<std::size_t>(truth[i]) * k + static_cast<std::size_t>(pred[i])] += 1.0;
    row[static_cast<std::size_t>(truth[i])] += 1.0;
    col[static_cast<std::size_t>(pred[i])] += 1.0;
  }
  const double n = static_cast<double>(pred.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double w = double((i - j) * (i - j)) / double((k - 1) * (k - 1));
      num += w * observed[i * k + j];
      den += w * row[i] * col[j] / n;
    }
  }
  if (num == 0.0) return 1.0;
  if (den == 0.0) throw UndefinedMetric("kappa: no chance disagreement");
  return 1.0 - num / den;
}

std::optional<double> MetricSet::get(const std::string& column) const {
  if (column == "kappa") return kappa;
  if (column == "AUC1") return auc1;
  if (column == "AUC2") return auc2;
  if (column == "AUC3") return auc3;
  throw ContractViolation("unknown metric column '" + column + "'");
}

MetricSet evaluate_predictions(const Tensor& tail, const std::vector<int>& pred, const std::vector<int>& truth) {
  require(tail.rows() == truth.size() && tail.cols() == 3, "evaluate_predictions: tail scores must be [N, 3]");
  MetricSet out;
  try {
    out.kappa = quadratic_weighted_kappa(pred, truth);
  } catch (const UndefinedMetric&) {
    out.undefined.push_back("kappa");
  }
  std::optional<double>* slots[3] = {&out.auc1, &out.auc2, &out.auc3};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> s(truth.size());
    std::vector<int> y(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      s[i] = tail.at(i, k);
      y[i] = truth[i] >= static_cast<int>(k) + 1;
    }
    try {
      *slots[k] = auc(s, y);
    } catch (const UndefinedMetric&) {
      out.undefined.push_back("AUC" + std::to_string(k + 1));
    }
  }
  return out;
}

const std::vector<std::string>& MetricTable::columns() {
  static const std::vector<std::string> cols{"kappa", "AUC1", "AUC2", "AUC3"};
  return cols;
}

std::string MetricTable::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["method"] = r.method;
    o["weights"] = r.weights;
    o["task"] = r.task;
    for (const auto& c : columns())
      if (auto v = r.metrics.get(c)) o[c] = *v;
    arr.push_back(o);
  }
  return arr.dump(2);
}

std::string MetricTable::to_text() const {
  std::vector<std::vector<std::string>> cells{{"method", "weights", "task"}};
  for (const auto& c : columns()) cells[0].push_back(c);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.method, r.weights, r.task};
    for (const auto& c : columns()) {
      if (auto v = r.metrics.get(c)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", *v);
        line.emplace_back(buf);
      } else {
        line.emplace_back("-");
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      const bool numeric = i >= 3;
      const std::string pad(width[i] - line[i].size(), ' ');
      os << (i ? "  " : "") << (numeric ? pad + line[i] : line[i] + (i + 1 < line.size() ? pad : ""));
    }
    os << '\n';
  }
  return os.str();
}

MetricTable metric_table(std::vector<TableRow> runs) {
  static const std::vector<std::string> methods{"node", "node_rnn", "node_lstm", "node_gru"};
  static const std::vector<std::string> weights{"scratch", "simclr_dpa", "byol_tetc"};
  auto rank = [&](const TableRow& r) {
    const auto m = std::find(methods.begin(), methods.end(), r.method);
    const auto w = std::find(weights.begin(), weights.end(), r.weights);
    if (m == methods.end() || w == weights.end()) return std::size_t(-1);
    return static_cast<std::size_t>((m - methods.begin()) * 16 + (w - weights.begin()));
  };
  // Tasks keep their first-appearance order; within a task, grid order.
  std::vector<std::string> tasks;
  for (const auto& r : runs)
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
  auto task_rank = [&](const TableRow& r) { return std::find(tasks.begin(), tasks.end(), r.task) - tasks.begin(); };
  std::stable_sort(runs.begin(), runs.end(), [&](const TableRow& a, const TableRow& b) {
    if (task_rank(a) != task_rank(b)) return task_rank(a) < task_rank(b);
    return rank(a) < rank(b);
  });
  return MetricTable{std::move(runs)};
}

}  // namespace tahead
