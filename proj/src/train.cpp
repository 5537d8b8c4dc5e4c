#include "bootplace/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "bootplace/adamw.hpp"
#include "bootplace/checkpoint.hpp"
#include "bootplace/ops.hpp"

namespace bootplace {

using diff::Tensor;

namespace {

constexpr double kLogFloor = 1e-12;

std::vector<Box> context_boxes(const Scene& scene) {
  std::vector<Box> out;
  out.reserve(scene.scene_objects.size());
  for (const SceneObject& o : scene.scene_objects) out.push_back(o.box);
  return out;
}

// Scalar graph for the box penalty of one matched pair: L1 distance plus the
// weighted generalized-overlap term, same arithmetic as the numeric box_loss.
Tensor pair_box_loss_graph(const Tensor& pred_boxes, int row, const Box& gt,
                           const BoxLossWeights& w) {
  using namespace diff;
  Tensor cx = at(pred_boxes, row, 0), cy = at(pred_boxes, row, 1);
  Tensor bw = at(pred_boxes, row, 2), bh = at(pred_boxes, row, 3);

  Tensor l1 = add(add(abs_val(add_const(cx, -gt.cx)), abs_val(add_const(cy, -gt.cy))),
                  add(abs_val(add_const(bw, -gt.w)), abs_val(add_const(bh, -gt.h))));

  Tensor half_w = mul_const(bw, 0.5), half_h = mul_const(bh, 0.5);
  Tensor px0 = sub(cx, half_w), px1 = add(cx, half_w);
  Tensor py0 = sub(cy, half_h), py1 = add(cy, half_h);
  const Corners g = to_corners(gt);
  Tensor gx0 = Tensor::scalar(g[0]), gy0 = Tensor::scalar(g[1]);
  Tensor gx1 = Tensor::scalar(g[2]), gy1 = Tensor::scalar(g[3]);

  Tensor inter_w = relu(sub(elt_min(px1, gx1), elt_max(px0, gx0)));
  Tensor inter_h = relu(sub(elt_min(py1, gy1), elt_max(py0, gy0)));
  Tensor inter = mul(inter_w, inter_h);
  // Predicted extents come out of a sigmoid, so both areas and the union
  // stay strictly positive and the divisions are safe.
  Tensor uni = sub(add(mul(bw, bh), Tensor::scalar(gt.area())), inter);
  Tensor iou_t = div(inter, uni);
  Tensor hull_w = sub(elt_max(px1, gx1), elt_min(px0, gx0));
  Tensor hull_h = sub(elt_max(py1, gy1), elt_min(py0, gy0));
  Tensor hull = mul(hull_w, hull_h);
  Tensor giou_t = sub(iou_t, div(sub(hull, uni), hull));

  return add(mul_const(l1, w.l1), mul_const(add_const(neg(giou_t), 1.0), w.giou));
}

void append_metrics(const std::filesystem::path& path, const MetricsRow& row) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw IoError("train: cannot append metrics to " + path.string());
  nlohmann::json j{{"step", row.step},   {"l_cls", row.l_cls}, {"l_box", row.l_box},
                   {"l_asso", row.l_asso}, {"total", row.total}, {"lr", row.lr}};
  f << j.dump() << "\n";
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("train config: loss weights must be non-negative");
  if (lr <= 0.0 || backbone_lr <= 0.0)
    throw std::invalid_argument("train config: learning rates must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: negative weight decay");
  if (batch_size != 1) throw std::invalid_argument("train config: only batch_size 1 is supported");
  if (steps < 0) throw std::invalid_argument("train config: negative step count");
  if (no_object_weight <= 0.0 || no_object_weight > 1.0)
    throw std::invalid_argument("train config: no_object_weight must be in (0, 1]");
  if (log_interval < 1 || checkpoint_interval < 1)
    throw std::invalid_argument("train config: intervals must be positive");
}

double classification_loss(const std::vector<std::vector<double>>& class_probs,
                           const std::vector<int>& target_classes, int no_object_class,
                           double no_object_weight) {
  if (class_probs.size() != target_classes.size())
    throw std::invalid_argument("classification_loss: one target class per proposal required");
  if (class_probs.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < class_probs.size(); ++i) {
    const int c = target_classes[i];
    if (c < 0 || c >= static_cast<int>(class_probs[i].size()))
      throw std::invalid_argument("classification_loss: class id out of range");
    const double w = c == no_object_class ? no_object_weight : 1.0;
    sum += w * -std::log(std::max(class_probs[i][c], kLogFloor));
  }
  return sum / static_cast<double>(class_probs.size());
}

double association_loss(const AssociationMatrix& m, const std::vector<int>& matched_proposal,
                        int* clamped_rows) {
  if (m.probabilities.size() != m.scores.size())
    throw std::invalid_argument("association_loss: probabilities not computed");
  if (static_cast<int>(matched_proposal.size()) != m.targets)
    throw std::invalid_argument("association_loss: one matched proposal per target required");
  if (clamped_rows) *clamped_rows = 0;
  double sum = 0.0;
  for (int k = 0; k < m.targets; ++k) {
    const int i = matched_proposal[k];
    if (i < 0 || i > m.proposals)
      throw std::invalid_argument("association_loss: matched proposal out of range");
    double p = m.prob_at(k, i);
    if (p < kLogFloor) {
      p = kLogFloor;
      if (clamped_rows) ++*clamped_rows;
    }
    sum += -std::log(p);
  }
  return sum;
}

StepOutput total_loss_graph(const PlacementModel& model, const Scene& scene,
                            const TrainConfig& cfg, bool training, Rng* dropout_rng,
                            const Assignment* fixed_assignment) {
  using namespace diff;
  const ModelConfig& mc = model.config();
  const int n = mc.num_queries;
  const int t = static_cast<int>(scene.targets.size());

  DetectionOutput det = model.forward_detect(scene.background, context_boxes(scene), training,
                                             dropout_rng);
  Tensor queries;  // [T, D]
  if (t > 0) {
    std::vector<Tensor> rows;
    rows.reserve(t);
    for (const TargetObject& target : scene.targets)
      rows.push_back(model.forward_object(target.patch));
    queries = concat_rows(rows);
  }

  // The matching itself is not differentiated: it runs on detached numbers
  // and the resulting indices select graph nodes.
  std::vector<int> gt_classes;
  std::vector<Box> gt_boxes;
  std::vector<std::vector<double>> probs_rows(n);
  std::vector<Box> pred_boxes(n);
  for (const TargetObject& target : scene.targets) {
    gt_classes.push_back(target.class_id);
    gt_boxes.push_back(target.box);
  }
  {
    NoGradGuard guard;
    const auto& pv = det.class_probs.values();
    const auto& bv = det.boxes.values();
    const int cols = mc.num_classes + 1;
    for (int i = 0; i < n; ++i) {
      probs_rows[i].assign(pv.begin() + static_cast<size_t>(i) * cols,
                           pv.begin() + static_cast<size_t>(i + 1) * cols);
      pred_boxes[i] = Box{bv[i * 4 + 0], bv[i * 4 + 1], bv[i * 4 + 2], bv[i * 4 + 3]};
    }
  }

  StepOutput out;
  // A diverged model produces non-finite activations; surface that as a
  // non-finite total instead of tripping the matcher's input validation.
  bool finite = true;
  for (int i = 0; i < n && finite; ++i) {
    for (double v : probs_rows[i]) finite = finite && std::isfinite(v);
    finite = finite && std::isfinite(pred_boxes[i].cx) && std::isfinite(pred_boxes[i].cy) &&
             std::isfinite(pred_boxes[i].w) && std::isfinite(pred_boxes[i].h);
  }
  if (!finite) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.total = Tensor::scalar(nan);
    out.numbers.classification = out.numbers.box = out.numbers.association = nan;
    out.numbers.total = nan;
    return out;
  }
  if (t > 0) {
    if (fixed_assignment) {
      out.numbers.assignment = *fixed_assignment;
      if (static_cast<int>(out.numbers.assignment.proposal_for_gt.size()) != t)
        throw std::invalid_argument("total_loss_graph: fixed assignment size mismatch");
    } else {
      out.numbers.assignment =
          hungarian(build_cost_matrix(gt_classes, gt_boxes, probs_rows, pred_boxes,
                                      cfg.box_weights));
    }
  }
  const std::vector<int>& matched = out.numbers.assignment.proposal_for_gt;

  // Classification: matched proposals owe their target's class, the rest the
  // no-object class at reduced weight.
  std::vector<int> wanted(n, mc.no_object_class());
  for (int k = 0; k < t; ++k) wanted[matched[k]] = gt_classes[k];
  std::vector<std::pair<int, int>> picks;
  std::vector<double> weights(n);
  picks.reserve(n);
  for (int i = 0; i < n; ++i) {
    picks.emplace_back(i, wanted[i]);
    weights[i] = (wanted[i] == mc.no_object_class() ? cfg.no_object_weight : 1.0) / n;
  }
  Tensor log_probs = log_clamped(det.class_probs, kLogFloor);
  Tensor l_cls = neg(sum_all(mul(select_entries(log_probs, picks),
                                 Tensor::from_values({n}, std::move(weights)))));

  Tensor l_box = Tensor::scalar(0.0);
  Tensor l_asso = Tensor::scalar(0.0);
  if (t > 0) {
    std::vector<Tensor> pair_losses;
    pair_losses.reserve(t);
    for (int k = 0; k < t; ++k)
      pair_losses.push_back(pair_box_loss_graph(det.boxes, matched[k], gt_boxes[k],
                                                cfg.box_weights));
    Tensor box_sum = pair_losses[0];
    for (int k = 1; k < t; ++k) box_sum = add(box_sum, pair_losses[k]);
    l_box = mul_const(box_sum, 1.0 / t);

    Tensor assoc = model.association_graph(queries, det.features);  // [T, N+1]
    std::vector<std::pair<int, int>> assoc_picks;
    assoc_picks.reserve(t);
    for (int k = 0; k < t; ++k) assoc_picks.emplace_back(k, matched[k]);
    l_asso = neg(sum_all(select_entries(log_clamped(assoc, kLogFloor), assoc_picks)));

    NoGradGuard guard;
    for (int k = 0; k < t; ++k)
      if (assoc.values()[static_cast<size_t>(k) * (n + 1) + matched[k]] < kLogFloor)
        ++out.numbers.clamped_rows;
  }

  out.total = add(l_cls, add(mul_const(l_box, cfg.alpha), mul_const(l_asso, cfg.beta)));
  out.numbers.classification = l_cls.item();
  out.numbers.box = l_box.item();
  out.numbers.association = l_asso.item();
  out.numbers.total = out.total.item();
  return out;
}

LossBreakdown total_loss(const PlacementModel& model, const Scene& scene,
                         const TrainConfig& cfg) {
  diff::NoGradGuard guard;
  return total_loss_graph(model, scene, cfg, false, nullptr).numbers;
}

TrainResult train(PlacementModel& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  for (const Scene& s : scenes)
    if (s.targets.empty()) throw std::invalid_argument("train: every scene needs a target");
  if (options.start_step < 0 || options.start_step > cfg.steps)
    throw std::invalid_argument("train: start step outside the schedule");

  diff::AdamWConfig main_opt_cfg;
  main_opt_cfg.lr = cfg.lr;
  main_opt_cfg.weight_decay = cfg.weight_decay;
  diff::AdamWConfig backbone_opt_cfg = main_opt_cfg;
  backbone_opt_cfg.lr = cfg.backbone_lr;
  diff::AdamW main_opt(model.non_backbone_parameters(), main_opt_cfg);
  diff::AdamW backbone_opt(model.backbone_parameters(), backbone_opt_cfg);

  const int64_t num_scenes = static_cast<int64_t>(scenes.size());
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  auto reshuffle = [&](int64_t epoch) {
    Rng rng = Rng::derive(cfg.seed, 0xE0000000ull + static_cast<uint64_t>(epoch));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
  };
  // Replay the permutation history so resumed runs see the same sequence.
  for (int64_t e = 0; e <= options.start_step / num_scenes; ++e) reshuffle(e);

  TrainResult result;
  for (int64_t step = options.start_step; step < cfg.steps; ++step) {
    if (step > options.start_step && step % num_scenes == 0) reshuffle(step / num_scenes);
    const Scene& base = scenes[order[step % num_scenes]];

    Rng aug_rng = Rng::derive(cfg.seed, 0xA0000000ull + static_cast<uint64_t>(step));
    Rng dropout_rng = Rng::derive(cfg.seed, 0xD0000000ull + static_cast<uint64_t>(step));
    const Scene sample = cfg.augment ? bootstrap_augment(base, aug_rng) : base;

    StepOutput so = total_loss_graph(model, sample, cfg, true, &dropout_rng);
    if (!std::isfinite(so.numbers.total)) {
      result.aborted_nan = true;
      break;
    }

    main_opt.zero_grad();
    backbone_opt.zero_grad();
    so.total.backward();
    main_opt.step();
    backbone_opt.step();
    ++result.steps_completed;

    const int64_t done = step + 1;
    if (done % cfg.log_interval == 0 || done == cfg.steps) {
      MetricsRow row{done,
                     so.numbers.classification,
                     so.numbers.box,
                     so.numbers.association,
                     so.numbers.total,
                     cfg.lr};
      result.metrics.push_back(row);
      append_metrics(options.metrics_path, row);
    }
    if (!options.checkpoint_dir.empty() &&
        (done % cfg.checkpoint_interval == 0 || done == cfg.steps)) {
      save_checkpoint(model, options.checkpoint_dir, done);
    }
  }
  return result;
}

}  // namespace bootplace
