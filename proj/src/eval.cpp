#include "bootplace/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "bootplace/threading.hpp"

namespace bootplace {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<Box> context_boxes(const Scene& scene) {
  std::vector<Box> boxes;
  boxes.reserve(scene.scene_objects.size());
  for (const SceneObject& o : scene.scene_objects) boxes.push_back(o.box);
  return boxes;
}

// One evaluated object: where it came from and its ranked placements on the
// host scene, computed once at the deepest k a caller needs.
struct RankedSample {
  int source_scene = 0;
  int host_scene = 0;
  Box gt;
  std::vector<RankedPlacement> ranked;
};

// host_of(i) names the scene each object of scene i is placed into. Scenes
// are processed in parallel; sample order stays (scene, object) so results
// are independent of scheduling.
std::vector<RankedSample> collect_samples(const RegionRanker& ranker,
                                          const std::vector<Scene>& scenes, int kmax,
                                          const std::function<int(int)>& host_of) {
  if (scenes.empty()) fail("eval: empty scene set");
  std::vector<std::vector<RankedSample>> per_scene(scenes.size());
  parallel_for(static_cast<int64_t>(scenes.size()), [&](int64_t si) {
    const int host_index = host_of(static_cast<int>(si));
    const Scene& host = scenes[host_index];
    const std::vector<RegionProposal> proposals = ranker.propose(host);
    for (const TargetObject& object : scenes[si].targets) {
      RankedSample s;
      s.source_scene = static_cast<int>(si);
      s.host_scene = host_index;
      s.gt = object.box;
      s.ranked = ranker.rank(proposals, object, kmax);
      per_scene[si].push_back(std::move(s));
    }
  });
  std::vector<RankedSample> flat;
  for (auto& group : per_scene)
    for (auto& s : group) flat.push_back(std::move(s));
  if (flat.empty()) fail("eval: scene set has no target objects");
  return flat;
}

std::vector<RankedSample> collect_reposition(const RegionRanker& ranker,
                                             const std::vector<Scene>& scenes, int kmax) {
  return collect_samples(ranker, scenes, kmax, [](int i) { return i; });
}

// Best IoU against the ground-truth box among the top-k of one sample.
double best_iou(const RankedSample& s, int k) {
  double best = 0.0;
  for (int j = 0; j < k; ++j) best = std::max(best, iou(s.ranked[j].box, s.gt));
  return best;
}

double mean_best_iou(const std::vector<RankedSample>& samples, int k) {
  double sum = 0.0;
  for (const RankedSample& s : samples) sum += best_iou(s, k);
  return sum / static_cast<double>(samples.size());
}

double fraction_at_half(const std::vector<RankedSample>& samples, int k) {
  int hits = 0;
  for (const RankedSample& s : samples)
    if (best_iou(s, k) >= 0.5) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double population_std(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

DiversityStats diversity_from_samples(const std::vector<RankedSample>& samples, int k) {
  DiversityStats out;
  out.k = k;
  for (const RankedSample& s : samples) {
    std::vector<double> scale(k), cx(k), cy(k);
    for (int j = 0; j < k; ++j) {
      const Box& b = s.ranked[j].box;
      scale[j] = std::sqrt(b.w * b.h);
      cx[j] = b.cx;
      cy[j] = b.cy;
    }
    out.scale_std += population_std(scale);
    out.x_std += population_std(cx);
    out.y_std += population_std(cy);
  }
  const double n = static_cast<double>(samples.size());
  out.scale_std /= n;
  out.x_std /= n;
  out.y_std /= n;
  return out;
}

int validated_k(int k) {
  if (k < 1) fail("eval: k must be at least 1");
  return k;
}

// Fraction of top-k placements whose IoU with any hole of their host scene
// strictly exceeds t.
std::map<double, double> overfit_curve(const std::vector<RankedSample>& samples,
                                       const std::vector<Scene>& scenes, int k,
                                       const std::vector<double>& thresholds) {
  std::vector<double> hole_ious;
  hole_ious.reserve(samples.size() * static_cast<size_t>(k));
  for (const RankedSample& s : samples) {
    const std::vector<Box>& holes = scenes[s.host_scene].holes;
    for (int j = 0; j < k; ++j) {
      double best = 0.0;
      for (const Box& hole : holes) best = std::max(best, iou(s.ranked[j].box, hole));
      hole_ious.push_back(best);
    }
  }
  std::map<double, double> curve;
  for (double t : thresholds) {
    int hits = 0;
    for (double v : hole_ious)
      if (v > t) ++hits;
    curve[t] = static_cast<double>(hits) / static_cast<double>(hole_ious.size());
  }
  return curve;
}

int max_of(const std::vector<int>& ks) {
  if (ks.empty()) fail("eval: k list must be nonempty");
  int m = 1;
  for (int k : ks) m = std::max(m, validated_k(k));
  return m;
}

}  // namespace

std::vector<RegionProposal> ModelRanker::propose(const Scene& host) const {
  return model_.detect(host.background, context_boxes(host));
}

std::vector<RankedPlacement> ModelRanker::rank(const std::vector<RegionProposal>& proposals,
                                               const TargetObject& object, int k) const {
  return model_.rank_placements(proposals, model_.encode_object(object.patch), k);
}

double iou_at_k(const RegionRanker& ranker, const std::vector<Scene>& scenes, int k) {
  return mean_best_iou(collect_reposition(ranker, scenes, validated_k(k)), k);
}

double iou50_at_k(const RegionRanker& ranker, const std::vector<Scene>& scenes, int k) {
  return fraction_at_half(collect_reposition(ranker, scenes, validated_k(k)), k);
}

std::map<double, double> overfit_rate(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                                      int k, const std::vector<double>& thresholds) {
  if (scenes.size() < 2) fail("eval: placement protocol needs at least two scenes");
  if (thresholds.empty()) fail("eval: threshold list must be nonempty");
  const int S = static_cast<int>(scenes.size());
  const auto samples = collect_samples(ranker, scenes, validated_k(k),
                                       [S](int i) { return (i + 1) % S; });
  return overfit_curve(samples, scenes, k, thresholds);
}

DiversityStats diversity_stats(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                               int k) {
  return diversity_from_samples(collect_reposition(ranker, scenes, validated_k(k)), k);
}

EvalReport evaluate_reposition(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                               const std::vector<int>& ks, int diversity_k) {
  const int kmax = std::max(max_of(ks), validated_k(diversity_k));
  const auto samples = collect_reposition(ranker, scenes, kmax);
  EvalReport report;
  report.protocol = "repose";
  report.scene_count = static_cast<int>(scenes.size());
  report.target_count = static_cast<int>(samples.size());
  for (int k : ks) {
    report.iou_at_k[k] = mean_best_iou(samples, k);
    report.iou50_at_k[k] = fraction_at_half(samples, k);
  }
  report.diversity = diversity_from_samples(samples, diversity_k);
  return report;
}

EvalReport evaluate_placement(const RegionRanker& ranker, const std::vector<Scene>& scenes,
                              const std::vector<int>& ks, const std::vector<double>& thresholds) {
  if (scenes.size() < 2) fail("eval: placement protocol needs at least two scenes");
  if (thresholds.empty()) fail("eval: threshold list must be nonempty");
  const int S = static_cast<int>(scenes.size());
  const auto samples = collect_samples(ranker, scenes, max_of(ks),
                                       [S](int i) { return (i + 1) % S; });
  EvalReport report;
  report.protocol = "place";
  report.scene_count = S;
  report.target_count = static_cast<int>(samples.size());
  for (int k : ks) report.overfit_rate[k] = overfit_curve(samples, scenes, k, thresholds);
  return report;
}

std::string to_json_string(const EvalReport& report) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  j["scene_count"] = report.scene_count;
  j["target_count"] = report.target_count;
  nlohmann::json iou = nlohmann::json::object();
  for (const auto& [k, v] : report.iou_at_k) iou[std::to_string(k)] = v;
  j["iou_at_k"] = iou;
  nlohmann::json iou50 = nlohmann::json::object();
  for (const auto& [k, v] : report.iou50_at_k) iou50[std::to_string(k)] = v;
  j["iou50_at_k"] = iou50;
  nlohmann::json overfit = nlohmann::json::object();
  for (const auto& [k, curve] : report.overfit_rate) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& [t, rate] : curve) points.push_back({{"threshold", t}, {"rate", rate}});
    overfit[std::to_string(k)] = points;
  }
  j["overfit_rate"] = overfit;
  j["diversity"] = {{"scale_std", report.diversity.scale_std},
                    {"x_std", report.diversity.x_std},
                    {"y_std", report.diversity.y_std},
                    {"k", report.diversity.k}};
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> export_attention(const PlacementModel& model, const Image& image,
                                                    const std::vector<Box>& scene_boxes,
                                                    const std::filesystem::path& out_dir) {
  diff::NoGradGuard guard;
  const DetectionOutput out = model.forward_detect(image, scene_boxes);
  const ModelConfig& cfg = model.config();
  const int g = cfg.grid_size();
  const int n = cfg.num_queries;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> paths;
  paths.reserve(n);
  const std::vector<double>& attn = out.cross_attention.values();
  for (int q = 0; q < n; ++q) {
    // Image part of the attention row, dropping the location tokens.
    FloatImage map;
    map.width = g;
    map.height = g;
    map.planes.assign(1, std::vector<double>(static_cast<size_t>(g) * g));
    double peak = 0.0;
    for (int t = 0; t < g * g; ++t) {
      const double v = attn[static_cast<size_t>(q) * out.memory_tokens + t];
      map.planes[0][t] = v;
      peak = std::max(peak, v);
    }
    if (peak > 0.0)
      for (double& v : map.planes[0]) v = v / peak * 255.0;
    Image raster = resize_bilinear(map.to_u8(), cfg.image_size, cfg.image_size);

    char name[32];
    std::snprintf(name, sizeof(name), "attention_%03d.png", q);
    std::filesystem::path path = out_dir / name;
    write_png(path.string(), raster);
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace bootplace
