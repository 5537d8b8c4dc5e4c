#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bootplace/data.hpp"
#include "bootplace/model.hpp"

namespace bootplace {

// Strategy behind every metric: propose candidate regions for a host scene,
// then order them for one object. Splitting the two lets a scene be proposed
// once and reused for all its objects, and lets tests swap in hand-built
// rankers.
struct RegionRanker {
  virtual ~RegionRanker() = default;
  virtual std::vector<RegionProposal> propose(const Scene& host) const = 0;
  // Top-k placements, best first. Throws std::invalid_argument when k < 1 or
  // k exceeds the proposal count.
  virtual std::vector<RankedPlacement> rank(const std::vector<RegionProposal>& proposals,
                                            const TargetObject& object, int k) const = 0;
};

// Ranker backed by a trained model: detect on the host background with its
// remaining scene objects, order proposals by association probability.
class ModelRanker final : public RegionRanker {
 public:
  explicit ModelRanker(const PlacementModel& model) : model_(model) {}
  std::vector<RegionProposal> propose(const Scene& host) const override;
  std::vector<RankedPlacement> rank(const std::vector<RegionProposal>& proposals,
                                    const TargetObject& object, int k) const override;

 private:
  const PlacementModel& model_;
};

// Population standard deviations of the top-k placement boxes, averaged over
// all (scene, object) samples: sqrt(w*h) for scale, box centers for x/y.
struct DiversityStats {
  double scale_std = 0.0;
  double x_std = 0.0;
  double y_std = 0.0;
  int k = 0;
};

struct EvalReport {
  std::string protocol;  // "repose" or "place"
  int scene_count = 0;
  int target_count = 0;
  std::map<int, double> iou_at_k;
  std::map<int, double> iou50_at_k;
  // Per k: threshold -> fraction of top-k placements whose IoU with any
  // removal hole of the host scene exceeds the threshold.
  std::map<int, std::map<double, double>> overfit_rate;
  DiversityStats diversity;  // repose protocol only
};

// Reposition protocol: each object is placed back into its own scene and
// scored against the box it was cut from.
//
// Mean over all objects of the best IoU among the top-k placements.
// Nondecreasing in k. Throws std::invalid_argument on an empty scene set or
// a set without any target objects.
double iou_at_k(const RegionRanker& ranker, const std::vector<Scene>& scenes, int k);
// Fraction of objects whose top-k best IoU reaches 0.5.
double iou50_at_k(const RegionRanker& ranker, const std::vector<Scene>& scenes, int k);

// Placement protocol: objects from scene i are placed into scene (i+1) mod S,
// so every prediction lands on a background the object did not come from.
// For each threshold the rate counts top-k placements sitting on a removal
// hole of the host scene (IoU with any hole strictly above the threshold).
// A host without holes contributes zero hits. Nonincreasing in the
// threshold. Needs at least two scenes.
std::map<double, double> overfit_rate(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                                      int k, const std::vector<double>& thresholds);

DiversityStats diversity_stats(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                               int k = 5);

// Full reposition report: iou/iou50 for every k in ks plus diversity at
// diversity_k.
EvalReport evaluate_reposition(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                               const std::vector<int>& ks, int diversity_k = 5);
// Full placement report: one overfit curve per k in ks.
EvalReport evaluate_placement(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                              const std::vector<int>& ks, const std::vector<double>& thresholds);

std::string to_json_string(const EvalReport& report);

// Writes one grayscale heatmap per region query: the decoder cross-attention
// over the image grid, upsampled to the input resolution and scaled so the
// hottest cell is white. Attention over grid plus location tokens sums to 1
// per query before this display scaling. Returns the written paths in query
// order. Throws IoError on write failure.
std::vector<std::filesystem::path> export_attention(const PlacementModel& model, const Image& image,
                                                    const std::vector<Box>& scene_boxes,
                                                    const std::filesystem::path& out_dir);

}  // namespace bootplace
