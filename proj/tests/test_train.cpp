#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bootplace/checkpoint.hpp"
#include "bootplace/data.hpp"
#include "bootplace/gradcheck.hpp"
#include "bootplace/train.hpp"

using namespace bootplace;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "bootplace_train_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSceneConfig tiny_scene_config(int targets) {
  SyntheticSceneConfig cfg;
  cfg.image_size = 16;
  cfg.min_targets = cfg.max_targets = targets;
  cfg.min_context_objects = 1;
  cfg.max_context_objects = 2;
  return cfg;
}

AssociationMatrix table(int targets, int proposals, std::vector<double> probs) {
  AssociationMatrix m;
  m.targets = targets;
  m.proposals = proposals;
  m.scores.assign(static_cast<size_t>(targets) * (proposals + 1), 0.0);
  m.probabilities = std::move(probs);
  return m;
}

}  // namespace

TEST_CASE("classification loss matches hand-computed references") {
  // Uniform three-way rows, everything assigned to no-object: each proposal
  // contributes weight * ln 3.
  std::vector<std::vector<double>> uniform(5, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  std::vector<int> all_null(5, 2);
  CHECK(classification_loss(uniform, all_null, 2, 0.1) ==
        doctest::Approx(0.1 * std::log(3.0)).epsilon(1e-12));
  CHECK(classification_loss(uniform, all_null, 2, 1.0) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // One-hot rows at the wanted class cost nothing.
  std::vector<std::vector<double>> perfect = {{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
  CHECK(classification_loss(perfect, {0, 2}, 2, 0.1) == doctest::Approx(0.0));

  // Mixed case, weights applied per row before the mean.
  std::vector<std::vector<double>> mixed = {{0.7, 0.2, 0.1}, {0.2, 0.3, 0.5}};
  const double want = (-std::log(0.7) + 0.5 * -std::log(0.5)) / 2.0;
  CHECK(classification_loss(mixed, {0, 2}, 2, 0.5) == doctest::Approx(want).epsilon(1e-12));

  CHECK(classification_loss({}, {}, 2, 0.1) == 0.0);
  CHECK_THROWS_AS(classification_loss(mixed, {0}, 2, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(classification_loss(mixed, {0, 3}, 2, 0.1), std::invalid_argument);
}

TEST_CASE("association loss sums matched negative log-likelihoods") {
  auto m = table(1, 2, {0.5, 0.3, 0.2});
  CHECK(association_loss(m, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(association_loss(m, {1}) == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
  CHECK(association_loss(m, {2}) == doctest::Approx(-std::log(0.2)).epsilon(1e-12));

  auto two = table(2, 2, {0.5, 0.25, 0.25, 0.25, 0.5, 0.25});
  CHECK(association_loss(two, {0, 1}) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  int clamped = -1;
  auto zero = table(1, 1, {0.0, 1.0});
  CHECK(association_loss(zero, {0}, &clamped) ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  CHECK(clamped == 1);

  CHECK_THROWS_AS(association_loss(m, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(association_loss(m, {3}), std::invalid_argument);
  auto unset = table(1, 2, {0.5, 0.3, 0.2});
  unset.probabilities.clear();
  CHECK_THROWS_AS(association_loss(unset, {0}), std::invalid_argument);
}

TEST_CASE("graph loss agrees with independent numeric recomputation") {
  PlacementModel model(ModelConfig::toy(), 31);
  Scene scene = generate_scene(tiny_scene_config(2), 5);
  TrainConfig cfg;

  StepOutput so = total_loss_graph(model, scene, cfg);
  const LossBreakdown& b = so.numbers;
  CHECK(b.total == doctest::Approx(b.classification + cfg.alpha * b.box +
                                   cfg.beta * b.association)
                       .epsilon(1e-12));
  CHECK(so.total.item() == doctest::Approx(b.total).epsilon(1e-12));

  // Numeric wrapper sees the same numbers.
  LossBreakdown b2 = total_loss(model, scene, cfg);
  CHECK(b2.total == doctest::Approx(b.total).epsilon(1e-12));
  CHECK(b2.assignment.proposal_for_gt == b.assignment.proposal_for_gt);

  // Rebuild every term from the numeric inference path.
  std::vector<Box> ctx;
  for (const auto& o : scene.scene_objects) ctx.push_back(o.box);
  auto proposals = model.detect(scene.background, ctx);
  const auto& matched = b.assignment.proposal_for_gt;
  REQUIRE(matched.size() == scene.targets.size());

  std::vector<int> wanted(model.config().num_queries, model.config().no_object_class());
  for (size_t k = 0; k < matched.size(); ++k) wanted[matched[k]] = scene.targets[k].class_id;
  std::vector<std::vector<double>> probs;
  for (const auto& p : proposals) probs.push_back(p.class_probs);
  CHECK(classification_loss(probs, wanted, model.config().no_object_class(),
                            cfg.no_object_weight) == doctest::Approx(b.classification).epsilon(1e-9));

  double box_sum = 0.0;
  for (size_t k = 0; k < matched.size(); ++k)
    box_sum += box_loss(proposals[matched[k]].box, scene.targets[k].box, cfg.box_weights);
  CHECK(box_sum / matched.size() == doctest::Approx(b.box).epsilon(1e-9));

  std::vector<ObjectQueryEmbedding> objects;
  for (const auto& t : scene.targets) objects.push_back(model.encode_object(t.patch));
  AssociationMatrix am = model.associate(proposals, objects);
  std::vector<int> matched_int(matched.begin(), matched.end());
  CHECK(association_loss(am, matched_int) == doctest::Approx(b.association).epsilon(1e-9));
}

TEST_CASE("loss weights scale their terms linearly") {
  PlacementModel model(ModelConfig::toy(), 41);
  Scene scene = generate_scene(tiny_scene_config(1), 6);

  TrainConfig plain;
  plain.alpha = 0.0;
  plain.beta = 0.0;
  LossBreakdown only_cls = total_loss(model, scene, plain);
  CHECK(only_cls.total == doctest::Approx(only_cls.classification).epsilon(1e-12));

  TrainConfig heavy;
  heavy.alpha = 2.0;
  heavy.beta = 3.0;
  LossBreakdown b = total_loss(model, scene, heavy);
  CHECK(b.total ==
        doctest::Approx(b.classification + 2.0 * b.box + 3.0 * b.association).epsilon(1e-12));
}

TEST_CASE("training gradients survive a full finite-difference audit") {
  // Miniature configuration, full pipeline: backbone, encoder/decoder,
  // heads, object encoder, matching-selected loss, dropout active with a
  // replayed mask sequence.
  PlacementModel model(ModelConfig::toy(), 404);
  Scene scene = generate_scene(tiny_scene_config(2), 7);
  TrainConfig cfg;

  const Assignment frozen = total_loss_graph(model, scene, cfg).numbers.assignment;
  auto params = model.parameters().tensors();
  auto f = [&](const std::vector<diff::Tensor>&) {
    Rng drop(1234);
    return total_loss_graph(model, scene, cfg, true, &drop, &frozen).total;
  };
  diff::GradCheckReport report = diff::grad_check(f, params, 1e-5);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("short training runs reduce the loss and update both groups") {
  ModelConfig mc = ModelConfig::toy();
  mc.dropout = 0.0;  // keep the decrease check noise-free
  PlacementModel model(mc, 77);
  std::vector<Scene> scenes = {generate_scene(tiny_scene_config(1), 9)};

  TrainConfig cfg;
  cfg.steps = 60;
  cfg.lr = 3e-3;
  cfg.backbone_lr = 1e-3;
  cfg.log_interval = 1;
  cfg.augment = false;
  cfg.seed = 5;

  const double w_backbone_before = model.backbone_parameters()[0].values()[0];
  const double w_main_before = model.non_backbone_parameters()[0].values()[0];
  TrainResult result = train(model, scenes, cfg);
  REQUIRE(result.steps_completed == 60);
  REQUIRE(result.metrics.size() == 60);
  CHECK_FALSE(result.aborted_nan);

  double early = 0.0, late = 0.0;
  for (int i = 0; i < 5; ++i) {
    early += result.metrics[i].total;
    late += result.metrics[result.metrics.size() - 1 - i].total;
  }
  CHECK(late < early);

  CHECK(model.backbone_parameters()[0].values()[0] != w_backbone_before);
  CHECK(model.non_backbone_parameters()[0].values()[0] != w_main_before);
}

TEST_CASE("training is bit-deterministic in the seed") {
  auto run = [] {
    PlacementModel model(ModelConfig::toy(), 11);
    std::vector<Scene> scenes = {generate_scene(tiny_scene_config(2), 1),
                                 generate_scene(tiny_scene_config(1), 2),
                                 generate_scene(tiny_scene_config(3), 3)};
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.log_interval = 1;
    cfg.seed = 21;
    return train(model, scenes, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].step == b.metrics[i].step);
    CHECK(a.metrics[i].total == b.metrics[i].total);
    CHECK(a.metrics[i].l_cls == b.metrics[i].l_cls);
    CHECK(a.metrics[i].l_box == b.metrics[i].l_box);
    CHECK(a.metrics[i].l_asso == b.metrics[i].l_asso);
  }
}

TEST_CASE("augmenting single-target scenes is a no-op for the trajectory") {
  auto run = [](bool augment) {
    PlacementModel model(ModelConfig::toy(), 13);
    std::vector<Scene> scenes = {generate_scene(tiny_scene_config(1), 4)};
    TrainConfig cfg;
    cfg.steps = 8;
    cfg.log_interval = 1;
    cfg.seed = 3;
    cfg.augment = augment;
    return train(model, scenes, cfg);
  };
  TrainResult with = run(true);
  TrainResult without = run(false);
  REQUIRE(with.metrics.size() == without.metrics.size());
  for (size_t i = 0; i < with.metrics.size(); ++i)
    CHECK(with.metrics[i].total == without.metrics[i].total);
}

TEST_CASE("non-finite losses abort and keep the last checkpoint") {
  PlacementModel model(ModelConfig::toy(), 15);
  model.parameters().get("heads.class.weight").values()[0] =
      std::numeric_limits<double>::quiet_NaN();
  std::vector<Scene> scenes = {generate_scene(tiny_scene_config(1), 8)};
  TrainConfig cfg;
  cfg.steps = 5;
  TrainResult result = train(model, scenes, cfg);
  CHECK(result.aborted_nan);
  CHECK(result.steps_completed == 0);
  CHECK(result.metrics.empty());
}

TEST_CASE("metrics stream as one json object per line") {
  fs::path dir = scratch_dir("metrics");
  PlacementModel model(ModelConfig::toy(), 19);
  std::vector<Scene> scenes = {generate_scene(tiny_scene_config(1), 12)};
  TrainConfig cfg;
  cfg.steps = 9;
  cfg.log_interval = 3;

  TrainOptions options;
  options.metrics_path = dir / "metrics.jsonl";
  TrainResult result = train(model, scenes, cfg, options);
  REQUIRE(result.metrics.size() == 3);  // steps 3, 6, 9

  std::ifstream f(options.metrics_path);
  REQUIRE(f.good());
  std::string line;
  int rows = 0;
  while (std::getline(f, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "l_cls", "l_box", "l_asso", "total", "lr"})
      CHECK(j.contains(key));
    CHECK(j["step"].get<int64_t>() == result.metrics[rows].step);
    CHECK(j["total"].get<double>() == doctest::Approx(result.metrics[rows].total));
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("checkpointing during training supports resuming the schedule") {
  fs::path dir = scratch_dir("resume");
  PlacementModel model(ModelConfig::toy(), 23);
  std::vector<Scene> scenes = {generate_scene(tiny_scene_config(2), 14),
                               generate_scene(tiny_scene_config(1), 15)};
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.log_interval = 1;
  cfg.checkpoint_interval = 4;
  cfg.seed = 9;

  TrainOptions options;
  options.checkpoint_dir = dir / "ckpt";
  TrainResult first = train(model, scenes, cfg, options);
  REQUIRE(first.steps_completed == 10);

  LoadedCheckpoint loaded = load_checkpoint(dir / "ckpt");
  CHECK(loaded.train_step == 10);

  cfg.steps = 14;
  TrainOptions resume_options;
  resume_options.start_step = loaded.train_step;
  TrainResult second = train(loaded.model, scenes, cfg, resume_options);
  CHECK(second.steps_completed == 4);
  REQUIRE(second.metrics.size() == 4);
  CHECK(second.metrics.front().step == 11);
  CHECK(second.metrics.back().step == 14);
}

TEST_CASE("train configuration rejects nonsense") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch_size = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.no_object_weight = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.steps = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  PlacementModel model(ModelConfig::toy(), 1);
  CHECK_THROWS_AS(train(model, {}, TrainConfig{}), std::invalid_argument);
}
