#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "bootplace/data.hpp"
#include "bootplace/eval.hpp"
#include "bootplace/threading.hpp"

using namespace bootplace;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "bootplace_eval_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Scene stub_scene(std::vector<Box> target_boxes, std::vector<Box> holes = {}) {
  Scene s;
  s.background = Image::blank(16, 16, 3, 128);
  for (const Box& b : target_boxes) {
    TargetObject t;
    t.patch = Image::blank(4, 4, 4, 200);
    t.box = b;
    s.targets.push_back(std::move(t));
  }
  s.holes = std::move(holes);
  return s;
}

std::vector<RegionProposal> decoy_proposals(int n) {
  std::vector<RegionProposal> out(n);
  for (int i = 0; i < n; ++i) out[i].box = {0.05 + 0.02 * i, 0.95, 0.02, 0.02};
  return out;
}

void check_rank_args(const std::vector<RegionProposal>& proposals, int k) {
  if (k < 1 || k > static_cast<int>(proposals.size()))
    throw std::invalid_argument("rank: k must be between 1 and the proposal count");
}

// Always puts the object's own box first, decoys after; a stand-in for a
// model that solved reposition exactly.
struct PerfectRanker final : RegionRanker {
  std::vector<RegionProposal> propose(const Scene&) const override { return decoy_proposals(8); }
  std::vector<RankedPlacement> rank(const std::vector<RegionProposal>& proposals,
                                    const TargetObject& object, int k) const override {
    check_rank_args(proposals, k);
    std::vector<RankedPlacement> out;
    out.push_back({0, object.box, 1.0});
    for (int j = 1; j < k; ++j) out.push_back({j, proposals[j].box, 0.0});
    return out;
  }
};

// Emits the same fixed box list for every object, in the stored order.
struct FixedBoxesRanker final : RegionRanker {
  std::vector<Box> boxes;
  explicit FixedBoxesRanker(std::vector<Box> b) : boxes(std::move(b)) {}
  std::vector<RegionProposal> propose(const Scene&) const override {
    std::vector<RegionProposal> out(boxes.size());
    for (size_t i = 0; i < boxes.size(); ++i) out[i].box = boxes[i];
    return out;
  }
  std::vector<RankedPlacement> rank(const std::vector<RegionProposal>& proposals,
                                    const TargetObject&, int k) const override {
    check_rank_args(proposals, k);
    std::vector<RankedPlacement> out;
    for (int j = 0; j < k; ++j) out.push_back({j, proposals[j].box, 1.0 / (1 + j)});
    return out;
  }
};

SyntheticSceneConfig tiny_scene_config() {
  SyntheticSceneConfig cfg;
  cfg.image_size = 16;
  cfg.min_targets = 1;
  cfg.max_targets = 2;
  cfg.min_context_objects = 1;
  cfg.max_context_objects = 2;
  return cfg;
}

std::vector<Scene> tiny_scenes(int count, uint64_t seed0) {
  std::vector<Scene> scenes;
  for (int i = 0; i < count; ++i)
    scenes.push_back(generate_scene(tiny_scene_config(), seed0 + static_cast<uint64_t>(i)));
  return scenes;
}

}  // namespace

TEST_CASE("a ranker that returns the true box scores 1.0 at every k") {
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.6, 0.2, 0.1}}),
                               stub_scene({{0.7, 0.8, 0.1, 0.1}, {0.5, 0.5, 0.3, 0.2}})};
  PerfectRanker ranker;
  for (int k : {1, 3, 8}) {
    CHECK(iou_at_k(ranker, scenes, k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(iou50_at_k(ranker, scenes, k) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("degenerate zero-area placements score zero") {
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.6, 0.2, 0.1}})};
  FixedBoxesRanker ranker(std::vector<Box>(6, Box{0.3, 0.6, 0.0, 0.0}));
  CHECK(iou_at_k(ranker, scenes, 3) == 0.0);
  CHECK(iou50_at_k(ranker, scenes, 3) == 0.0);
}

TEST_CASE("metrics are monotone in k on a live model") {
  PlacementModel model(ModelConfig::toy(), 99);
  ModelRanker ranker(model);
  std::vector<Scene> scenes = tiny_scenes(3, 500);

  double prev_iou = -1.0, prev_half = -1.0;
  for (int k = 1; k <= model.config().num_queries; ++k) {
    const double v = iou_at_k(ranker, scenes, k);
    const double h = iou50_at_k(ranker, scenes, k);
    CHECK(v >= prev_iou);
    CHECK(h >= prev_half);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    prev_iou = v;
    prev_half = h;
  }
}

TEST_CASE("overfit rate is zero without holes and follows a hand-built curve") {
  // Scene 0 has one hole, scene 1 none. Objects of scene 0 land on scene 1
  // (no holes, no hits); objects of scene 1 land on scene 0, where the
  // ranker's two boxes overlap the hole with IoU 1 and 1/3.
  const Box hole = {0.5, 0.5, 0.2, 0.2};
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.3, 0.1, 0.1}}, {hole}),
                               stub_scene({{0.6, 0.6, 0.1, 0.1}})};
  FixedBoxesRanker ranker({hole, {0.6, 0.5, 0.2, 0.2}});

  const auto curve = overfit_rate(ranker, scenes, 2, {0.2, 0.5, 1.0});
  CHECK(curve.at(0.2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(curve.at(0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(curve.at(1.0) == 0.0);

  std::vector<Scene> no_holes = {stub_scene({{0.3, 0.3, 0.1, 0.1}}),
                                 stub_scene({{0.6, 0.6, 0.1, 0.1}})};
  for (const auto& [t, rate] : overfit_rate(ranker, no_holes, 2, {0.0, 0.5})) CHECK(rate == 0.0);

  std::vector<Scene> single = {stub_scene({{0.3, 0.3, 0.1, 0.1}})};
  CHECK_THROWS_AS(overfit_rate(ranker, single, 2, {0.5}), std::invalid_argument);
}

TEST_CASE("overfit curve is nonincreasing on a live model") {
  PlacementModel model(ModelConfig::toy(), 7);
  ModelRanker ranker(model);
  std::vector<Scene> scenes = tiny_scenes(4, 900);
  const std::vector<double> thresholds = {0.1, 0.3, 0.5, 0.7, 0.9};
  const auto curve = overfit_rate(ranker, scenes, 3, thresholds);
  double prev = 2.0;
  for (double t : thresholds) {
    CHECK(curve.at(t) <= prev);
    CHECK(curve.at(t) >= 0.0);
    prev = curve.at(t);
  }
}

TEST_CASE("diversity stats match a hand-built spread and ignore box order") {
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.6, 0.2, 0.1}})};

  std::vector<Box> spread;
  for (int i = 1; i <= 5; ++i) spread.push_back({0.1 * i, 0.5, 0.2, 0.2});
  FixedBoxesRanker ranker(spread);
  const DiversityStats d = diversity_stats(ranker, scenes, 5);
  // cx values 0.1..0.5: population variance 0.02; cy and sqrt(w*h) constant.
  CHECK(d.x_std == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(d.y_std == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.scale_std == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.k == 5);

  std::vector<Box> shuffled = {spread[3], spread[0], spread[4], spread[2], spread[1]};
  const DiversityStats d2 = diversity_stats(FixedBoxesRanker(shuffled), scenes, 5);
  CHECK(d2.x_std == doctest::Approx(d.x_std).epsilon(1e-12));
  CHECK(d2.y_std == doctest::Approx(d.y_std).epsilon(1e-12));
  CHECK(d2.scale_std == doctest::Approx(d.scale_std).epsilon(1e-12));

  const DiversityStats same = diversity_stats(
      FixedBoxesRanker(std::vector<Box>(5, Box{0.4, 0.4, 0.2, 0.2})), scenes, 5);
  CHECK(same.scale_std == 0.0);
  CHECK(same.x_std == 0.0);
  CHECK(same.y_std == 0.0);
}

TEST_CASE("reposition report bundles every k and serializes to json") {
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.6, 0.2, 0.1}}),
                               stub_scene({{0.7, 0.8, 0.1, 0.1}, {0.5, 0.5, 0.3, 0.2}})};
  PerfectRanker ranker;
  const EvalReport report = evaluate_reposition(ranker, scenes, {1, 3}, 5);
  CHECK(report.protocol == "repose");
  CHECK(report.scene_count == 2);
  CHECK(report.target_count == 3);
  CHECK(report.iou_at_k.at(1) == doctest::Approx(1.0));
  CHECK(report.iou_at_k.at(3) == doctest::Approx(1.0));
  CHECK(report.iou50_at_k.at(1) == doctest::Approx(1.0));

  const auto j = nlohmann::json::parse(to_json_string(report));
  CHECK(j["protocol"] == "repose");
  CHECK(j["iou_at_k"]["1"].get<double>() == doctest::Approx(1.0));
  CHECK(j["iou_at_k"]["3"].get<double>() == doctest::Approx(1.0));
  CHECK(j["diversity"]["k"].get<int>() == 5);
  CHECK(j["target_count"].get<int>() == 3);
}

TEST_CASE("placement report carries one curve per k") {
  const Box hole = {0.5, 0.5, 0.2, 0.2};
  std::vector<Scene> scenes = {stub_scene({{0.3, 0.3, 0.1, 0.1}}, {hole}),
                               stub_scene({{0.6, 0.6, 0.1, 0.1}})};
  FixedBoxesRanker ranker({hole, {0.6, 0.5, 0.2, 0.2}});
  const EvalReport report = evaluate_placement(ranker, scenes, {1, 2}, {0.2, 0.5});
  CHECK(report.protocol == "place");
  CHECK(report.overfit_rate.size() == 2);
  // k=1 sees only the exact-hole box: one hit out of two predictions.
  CHECK(report.overfit_rate.at(1).at(0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report.overfit_rate.at(2).at(0.5) == doctest::Approx(0.25).epsilon(1e-12));

  const auto j = nlohmann::json::parse(to_json_string(report));
  CHECK(j["overfit_rate"]["1"].is_array());
  CHECK(j["overfit_rate"]["2"].size() == 2);
}

TEST_CASE("reports are deterministic and independent of the thread count") {
  PlacementModel model(ModelConfig::toy(), 42);
  ModelRanker ranker(model);
  std::vector<Scene> scenes = tiny_scenes(5, 1300);

  setenv("BOOTPLACE_THREADS", "1", 1);
  const std::string serial = to_json_string(evaluate_reposition(ranker, scenes, {1, 4}, 4));
  setenv("BOOTPLACE_THREADS", "3", 1);
  const std::string threaded = to_json_string(evaluate_reposition(ranker, scenes, {1, 4}, 4));
  const std::string again = to_json_string(evaluate_reposition(ranker, scenes, {1, 4}, 4));
  unsetenv("BOOTPLACE_THREADS");

  CHECK(serial == threaded);
  CHECK(threaded == again);
}

TEST_CASE("invalid eval inputs are rejected") {
  PerfectRanker ranker;
  std::vector<Scene> empty;
  CHECK_THROWS_AS(iou_at_k(ranker, empty, 1), std::invalid_argument);

  std::vector<Scene> no_targets = {stub_scene({})};
  CHECK_THROWS_AS(iou_at_k(ranker, no_targets, 1), std::invalid_argument);

  std::vector<Scene> one = {stub_scene({{0.3, 0.6, 0.2, 0.1}})};
  CHECK_THROWS_AS(iou_at_k(ranker, one, 0), std::invalid_argument);
  CHECK_THROWS_AS(iou_at_k(ranker, one, 9), std::invalid_argument);  // 8 proposals
  CHECK_THROWS_AS(diversity_stats(ranker, one, 9), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_reposition(ranker, one, {}, 5), std::invalid_argument);
}

TEST_CASE("attention export writes one normalized map per query") {
  PlacementModel model(ModelConfig::toy(), 11);
  Scene scene = generate_scene(tiny_scene_config(), 77);
  std::vector<Box> context;
  for (const SceneObject& o : scene.scene_objects) context.push_back(o.box);

  const fs::path dir = scratch_dir("attention");
  const auto paths = export_attention(model, scene.background, context, dir);
  REQUIRE(static_cast<int>(paths.size()) == model.config().num_queries);
  for (const auto& p : paths) CHECK(fs::exists(p));

  // Raw per-query attention over the full memory is a probability row.
  const DetectionOutput out = model.forward_detect(scene.background, context);
  const auto& attn = out.cross_attention.values();
  for (int q = 0; q < model.config().num_queries; ++q) {
    double sum = 0.0;
    for (int t = 0; t < out.memory_tokens; ++t)
      sum += attn[static_cast<size_t>(q) * out.memory_tokens + t];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  // Maps are per-query, not one shared raster.
  bool any_differ = false;
  const Image first = read_png(paths[0].string());
  for (size_t i = 1; i < paths.size() && !any_differ; ++i)
    any_differ = !(read_png(paths[i].string()) == first);
  CHECK(any_differ);
  fs::remove_all(dir.parent_path());
}

TEST_CASE("parallel_for covers every index exactly once and propagates errors") {
  setenv("BOOTPLACE_THREADS", "4", 1);
  CHECK(worker_count() == 4);

  std::vector<std::atomic<int>> hits(257);
  for (auto& h : hits) h.store(0);
  parallel_for(257, [&](int64_t i) { hits[static_cast<size_t>(i)].fetch_add(1); });
  for (auto& h : hits) CHECK(h.load() == 1);

  CHECK_THROWS_WITH(parallel_for(64,
                                 [](int64_t i) {
                                   if (i == 37) throw std::runtime_error("worker failed");
                                 }),
                    "worker failed");

  parallel_for(0, [](int64_t) { throw std::runtime_error("never runs"); });

  setenv("BOOTPLACE_THREADS", "garbage", 1);
  CHECK(worker_count() == 1);
  unsetenv("BOOTPLACE_THREADS");
  CHECK(worker_count() >= 1);
}
