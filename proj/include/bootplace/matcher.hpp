#pragma once

#include <vector>

#include "bootplace/geometry.hpp"

namespace bootplace {

// Rectangular cost table: one row per ground-truth slot, one column per
// proposal. Requires rows <= cols; solvers reject anything else.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> cost;  // row-major, rows*cols entries

  double at(int r, int c) const { return cost[static_cast<size_t>(r) * cols + c]; }
  double& at(int r, int c) { return cost[static_cast<size_t>(r) * cols + c]; }
};

// Injective row -> column map plus the summed cost of the selected entries.
struct Assignment {
  std::vector<int> proposal_for_gt;
  double total_cost = 0.0;
};

// Matching cost for one (ground truth, proposal) pair: -P(class) plus the box
// regression penalty, or exactly 0 when the ground-truth class is the
// no-object class. By convention the no-object class is the last entry of
// pred_class_probs.
double match_cost(int gt_class, const Box& gt_box, const std::vector<double>& pred_class_probs,
                  const Box& pred_box, const BoxLossWeights& weights = {});

CostMatrix build_cost_matrix(const std::vector<int>& gt_classes, const std::vector<Box>& gt_boxes,
                             const std::vector<std::vector<double>>& pred_class_probs,
                             const std::vector<Box>& pred_boxes,
                             const BoxLossWeights& weights = {});

// Globally optimal assignment via shortest augmenting paths; O(rows^2 * cols).
Assignment hungarian(const CostMatrix& cost);

// Exhaustive minimum over all injections; guard limits rows to 8. Ties are
// resolved toward the lexicographically smallest assignment vector.
Assignment brute_force_assignment(const CostMatrix& cost);

}  // namespace bootplace
