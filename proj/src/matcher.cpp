#include "bootplace/matcher.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bootplace {

namespace {

void validate(const char* op, const CostMatrix& m) {
  if (m.rows < 1 || m.cols < 1) {
    throw std::invalid_argument(std::string(op) + ": empty cost matrix");
  }
  if (m.rows > m.cols) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(m.rows) +
                                " ground-truth slots exceed " + std::to_string(m.cols) +
                                " proposals; raise the proposal budget or truncate the targets");
  }
  if (m.cost.size() != static_cast<size_t>(m.rows) * m.cols) {
    throw std::invalid_argument(std::string(op) + ": entry count does not match dimensions");
  }
  for (double c : m.cost) {
    if (!std::isfinite(c)) {
      throw std::invalid_argument(std::string(op) + ": non-finite cost entry");
    }
  }
}

}  // namespace

double match_cost(int gt_class, const Box& gt_box, const std::vector<double>& pred_class_probs,
                  const Box& pred_box, const BoxLossWeights& weights) {
  if (pred_class_probs.empty()) {
    throw std::invalid_argument("match_cost: empty class distribution");
  }
  const int no_object = static_cast<int>(pred_class_probs.size()) - 1;
  if (gt_class < 0 || gt_class > no_object) {
    throw std::invalid_argument("match_cost: class " + std::to_string(gt_class) +
                                " outside [0, " + std::to_string(no_object) + "]");
  }
  if (gt_class == no_object) return 0.0;
  return -pred_class_probs[gt_class] + box_loss(pred_box, gt_box, weights);
}

CostMatrix build_cost_matrix(const std::vector<int>& gt_classes, const std::vector<Box>& gt_boxes,
                             const std::vector<std::vector<double>>& pred_class_probs,
                             const std::vector<Box>& pred_boxes, const BoxLossWeights& weights) {
  if (gt_classes.size() != gt_boxes.size()) {
    throw std::invalid_argument("build_cost_matrix: " + std::to_string(gt_classes.size()) +
                                " classes vs " + std::to_string(gt_boxes.size()) + " boxes");
  }
  if (pred_class_probs.size() != pred_boxes.size()) {
    throw std::invalid_argument("build_cost_matrix: " + std::to_string(pred_class_probs.size()) +
                                " distributions vs " + std::to_string(pred_boxes.size()) +
                                " boxes");
  }
  CostMatrix m;
  m.rows = static_cast<int>(gt_classes.size());
  m.cols = static_cast<int>(pred_boxes.size());
  m.cost.resize(static_cast<size_t>(m.rows) * m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      m.at(r, c) = match_cost(gt_classes[r], gt_boxes[r], pred_class_probs[c], pred_boxes[c],
                              weights);
    }
  }
  return m;
}

Assignment hungarian(const CostMatrix& cost) {
  validate("hungarian", cost);
  const int t = cost.rows, n = cost.cols;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Shortest-augmenting-path formulation with dual potentials. Columns are
  // 1-based internally; column 0 is the virtual source.
  std::vector<double> u(static_cast<size_t>(t) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> matched_row(static_cast<size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= t; ++i) {
    matched_row[0] = i;
    int j0 = 0;
    std::vector<double> min_residual(static_cast<size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = matched_row[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double residual = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (residual < min_residual[j]) {
          min_residual[j] = residual;
          way[j] = j0;
        }
        if (min_residual[j] < delta) {
          delta = min_residual[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[matched_row[j]] += delta;
          v[j] -= delta;
        } else {
          min_residual[j] -= delta;
        }
      }
      j0 = j1;
    } while (matched_row[j0] != 0);
    do {
      const int j1 = way[j0];
      matched_row[j0] = matched_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment result;
  result.proposal_for_gt.assign(t, -1);
  for (int j = 1; j <= n; ++j) {
    if (matched_row[j] != 0) result.proposal_for_gt[matched_row[j] - 1] = j - 1;
  }
  for (int i = 0; i < t; ++i) {
    result.total_cost += cost.at(i, result.proposal_for_gt[i]);
  }
  return result;
}

Assignment brute_force_assignment(const CostMatrix& cost) {
  validate("brute_force_assignment", cost);
  if (cost.rows > 8) {
    throw std::invalid_argument("brute_force_assignment: " + std::to_string(cost.rows) +
                                " rows exceed the factorial guard of 8");
  }
  const int t = cost.rows, n = cost.cols;

  // Admissible lower bound for pruning: sum of per-row minima for the rows
  // not yet assigned. Valid for negative entries too.
  std::vector<double> suffix_bound(static_cast<size_t>(t) + 1, 0.0);
  for (int r = t - 1; r >= 0; --r) {
    double row_min = cost.at(r, 0);
    for (int c = 1; c < n; ++c) row_min = std::min(row_min, cost.at(r, c));
    suffix_bound[r] = suffix_bound[r + 1] + row_min;
  }

  Assignment best;
  best.total_cost = std::numeric_limits<double>::infinity();
  std::vector<int> current(t, -1);
  std::vector<char> taken(static_cast<size_t>(n), 0);

  auto recurse = [&](auto&& self, int row, double acc) -> void {
    if (row == t) {
      if (acc < best.total_cost) {
        best.total_cost = acc;
        best.proposal_for_gt = current;
      }
      return;
    }
    if (acc + suffix_bound[row] >= best.total_cost) return;
    for (int c = 0; c < n; ++c) {
      if (taken[c]) continue;
      taken[c] = 1;
      current[row] = c;
      self(self, row + 1, acc + cost.at(row, c));
      taken[c] = 0;
    }
    current[row] = -1;
  };
  recurse(recurse, 0, 0.0);
  return best;
}

}  // namespace bootplace
