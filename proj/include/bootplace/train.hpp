#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bootplace/data.hpp"
#include "bootplace/geometry.hpp"
#include "bootplace/matcher.hpp"
#include "bootplace/model.hpp"
#include "bootplace/rng.hpp"
#include "bootplace/tensor.hpp"

namespace bootplace {

struct TrainConfig {
  double alpha = 5.0;  // box-loss weight in the total
  double beta = 1.0;   // association-loss weight in the total
  double lr = 4e-4;
  double backbone_lr = 5e-5;
  double weight_decay = 1e-4;
  int batch_size = 1;  // single-image steps
  int64_t steps = 5000;
  uint64_t seed = 0;
  double no_object_weight = 0.1;  // down-weight for unmatched proposals
  bool augment = true;            // bootstrapped re-compositing per step
  int log_interval = 50;
  int checkpoint_interval = 1000;
  BoxLossWeights box_weights{};

  void validate() const;  // throws std::invalid_argument
};

// Weighted cross-entropy over proposals: rows of class_probs against the
// class each proposal was assigned (the no-object class for unmatched ones),
// averaged over proposals with no-object rows down-weighted.
double classification_loss(const std::vector<std::vector<double>>& class_probs,
                           const std::vector<int>& target_classes, int no_object_class,
                           double no_object_weight);

// Negative log-likelihood of each target's matched proposal, summed over
// targets. Probabilities are floored at 1e-12; clamped_rows (if given)
// counts how often the floor fired.
double association_loss(const AssociationMatrix& m, const std::vector<int>& matched_proposal,
                        int* clamped_rows = nullptr);

struct LossBreakdown {
  double classification = 0.0;
  double box = 0.0;          // mean over matched pairs, before the alpha weight
  double association = 0.0;  // before the beta weight
  double total = 0.0;
  Assignment assignment;
  int clamped_rows = 0;
};

struct StepOutput {
  LossBreakdown numbers;
  diff::Tensor total;  // scalar graph node; backward() reaches every parameter
};

// Full training objective on one scene: detection, object embedding, optimal
// matching on detached values, then classification + alpha * box +
// beta * association assembled on the graph. A fixed_assignment skips the
// matching (gradient checks need the assignment held constant).
StepOutput total_loss_graph(const PlacementModel& model, const Scene& scene,
                            const TrainConfig& cfg, bool training = false,
                            Rng* dropout_rng = nullptr,
                            const Assignment* fixed_assignment = nullptr);

// Numeric convenience wrapper: same computation, no graph kept.
LossBreakdown total_loss(const PlacementModel& model, const Scene& scene, const TrainConfig& cfg);

struct MetricsRow {
  int64_t step = 0;  // 1-based, after the update
  double l_cls = 0.0;
  double l_box = 0.0;
  double l_asso = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::filesystem::path metrics_path;    // JSONL, one row per log interval
  std::filesystem::path checkpoint_dir;  // periodic + final checkpoints
  int64_t start_step = 0;                // resume offset
};

struct TrainResult {
  int64_t steps_completed = 0;  // steps run in this call
  bool aborted_nan = false;     // loss went non-finite; last checkpoint kept
  std::vector<MetricsRow> metrics;
};

// AdamW on two parameter groups (backbone at backbone_lr, the rest at lr),
// one scene per step in a reshuffled epoch order, optional bootstrapped
// augmentation. Deterministic for a given (config, scenes, start_step).
TrainResult train(PlacementModel& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace bootplace
