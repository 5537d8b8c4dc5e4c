#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bootplace/model.hpp"
#include "bootplace/ops.hpp"
#include "bootplace/rng.hpp"

using namespace bootplace;

namespace {

Image random_image(int w, int h, int channels, uint64_t seed) {
  Rng rng(seed);
  Image img = Image::blank(w, h, channels);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  return img;
}

Image constant_image(int w, int h, uint8_t value) {
  Image img = Image::blank(w, h, 3);
  for (auto& p : img.pixels) p = value;
  return img;
}

std::vector<double> unit_vector(int dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

AssociationMatrix table_from_probabilities(int targets, int proposals,
                                           std::vector<double> probs) {
  AssociationMatrix m;
  m.targets = targets;
  m.proposals = proposals;
  m.scores.assign(static_cast<size_t>(targets) * (proposals + 1), 0.0);
  m.probabilities = std::move(probs);
  REQUIRE(m.probabilities.size() == m.scores.size());
  return m;
}

std::vector<Box> dummy_boxes(int n) {
  std::vector<Box> out;
  for (int i = 0; i < n; ++i)
    out.push_back(Box{0.1 + 0.05 * i, 0.2 + 0.04 * i, 0.1, 0.1});
  return out;
}

}  // namespace

TEST_CASE("config presets validate and reject bad values") {
  CHECK_NOTHROW(ModelConfig::desk().validate());
  CHECK_NOTHROW(ModelConfig::paper().validate());
  CHECK_NOTHROW(ModelConfig::toy().validate());
  CHECK(ModelConfig::desk().grid_tokens() == 64);
  CHECK(ModelConfig::toy().grid_tokens() == 4);
  CHECK(ModelConfig::paper().num_queries == 100);

  ModelConfig bad = ModelConfig::desk();
  bad.model_dim = 66;  // not divisible by 4
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ModelConfig::desk();
  bad.num_heads = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ModelConfig::desk();
  bad.image_size = 60;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ModelConfig::desk();
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ModelConfig::desk();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("detect emits a fixed number of well-formed proposals") {
  PlacementModel model(ModelConfig::desk(), 7);
  Image img = random_image(64, 64, 3, 11);
  std::vector<Box> scene = {Box{0.3, 0.6, 0.2, 0.1}, Box{0.7, 0.7, 0.15, 0.12}};
  auto proposals = model.detect(img, scene);

  REQUIRE(static_cast<int>(proposals.size()) == model.config().num_queries);
  for (const auto& p : proposals) {
    CHECK(p.box.cx > 0.0);
    CHECK(p.box.cx < 1.0);
    CHECK(p.box.cy > 0.0);
    CHECK(p.box.cy < 1.0);
    CHECK(p.box.w > 0.0);
    CHECK(p.box.w < 1.0);
    CHECK(p.box.h > 0.0);
    CHECK(p.box.h < 1.0);

    REQUIRE(static_cast<int>(p.class_probs.size()) == model.config().num_classes + 1);
    double sum = 0.0;
    for (double c : p.class_probs) {
      CHECK(c >= 0.0);
      sum += c;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    REQUIRE(static_cast<int>(p.feature.size()) == model.config().assoc_dim);
    double norm = 0.0;
    for (double f : p.feature) norm += f * f;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("identical seeds build identical models") {
  ModelConfig cfg = ModelConfig::toy();
  PlacementModel a(cfg, 99), b(cfg, 99), c(cfg, 100);
  Image img = random_image(16, 16, 3, 5);
  auto pa = a.detect(img, {});
  auto pb = b.detect(img, {});
  auto pc = c.detect(img, {});
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].box.cx == pb[i].box.cx);
    CHECK(pa[i].feature == pb[i].feature);
    CHECK(pa[i].class_probs == pb[i].class_probs);
  }
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].box.cx != pc[i].box.cx) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("memory grows by one token per scene object and rejects overruns") {
  ModelConfig cfg = ModelConfig::toy();
  PlacementModel model(cfg, 3);
  Image img = random_image(16, 16, 3, 8);

  auto bare = model.forward_detect(img, {});
  CHECK(bare.memory_tokens == cfg.grid_tokens());
  CHECK(bare.grid_tokens == cfg.grid_tokens());

  std::vector<Box> three = dummy_boxes(3);
  auto with = model.forward_detect(img, three);
  CHECK(with.memory_tokens == cfg.grid_tokens() + 3);
  CHECK(with.cross_attention.dim(0) == cfg.num_queries);
  CHECK(with.cross_attention.dim(1) == cfg.grid_tokens() + 3);

  std::vector<Box> too_many = dummy_boxes(cfg.max_scene_objects + 1);
  CHECK_THROWS_AS(model.forward_detect(img, too_many), std::invalid_argument);
}

TEST_CASE("cross attention rows are probability distributions over memory") {
  PlacementModel model(ModelConfig::toy(), 13);
  Image img = random_image(16, 16, 3, 21);
  auto out = model.forward_detect(img, dummy_boxes(2));
  const int n = out.cross_attention.dim(0);
  const int mem = out.cross_attention.dim(1);
  for (int r = 0; r < n; ++r) {
    double sum = 0.0;
    for (int c = 0; c < mem; ++c) {
      double w = out.cross_attention.value_at(static_cast<size_t>(r) * mem + c);
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("constant images differ only by a spatially constant token shift") {
  // Replicate padding keeps convolutions of a constant exactly constant, so
  // any spatial variation in the tokens of a constant image is the position
  // code, which cancels in the difference of two constant images.
  PlacementModel model(ModelConfig::toy(), 17);
  auto ta = model.backbone_tokens(constant_image(16, 16, 90));
  auto tb = model.backbone_tokens(constant_image(16, 16, 200));
  const int rows = ta.dim(0), cols = ta.dim(1);
  REQUIRE(rows == 4);
  for (int c = 0; c < cols; ++c) {
    const double first = ta.value_at(c) - tb.value_at(c);
    for (int r = 1; r < rows; ++r) {
      double delta = ta.value_at(static_cast<size_t>(r) * cols + c) -
                     tb.value_at(static_cast<size_t>(r) * cols + c);
      CHECK(delta == doctest::Approx(first).epsilon(1e-9));
    }
  }
  // The position code itself must leave some spatial variation behind.
  double max_row_gap = 0.0;
  for (int c = 0; c < cols; ++c)
    max_row_gap = std::max(max_row_gap,
                           std::abs(ta.value_at(c) - ta.value_at(static_cast<size_t>(cols) + c)));
  CHECK(max_row_gap > 1e-3);
}

TEST_CASE("scene box order does not change the proposals") {
  PlacementModel model(ModelConfig::toy(), 23);
  Image img = random_image(16, 16, 3, 31);
  std::vector<Box> boxes = {Box{0.2, 0.3, 0.1, 0.1}, Box{0.6, 0.5, 0.2, 0.15},
                            Box{0.8, 0.8, 0.1, 0.2}};
  std::vector<Box> shuffled = {boxes[2], boxes[0], boxes[1]};
  auto a = model.detect(img, boxes);
  auto b = model.detect(img, shuffled);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].box.cx == doctest::Approx(b[i].box.cx).epsilon(1e-9));
    CHECK(a[i].box.cy == doctest::Approx(b[i].box.cy).epsilon(1e-9));
    CHECK(a[i].box.w == doctest::Approx(b[i].box.w).epsilon(1e-9));
    CHECK(a[i].box.h == doctest::Approx(b[i].box.h).epsilon(1e-9));
    for (size_t c = 0; c < a[i].feature.size(); ++c)
      CHECK(a[i].feature[c] == doctest::Approx(b[i].feature[c]).epsilon(1e-9));
  }
}

TEST_CASE("association scores match the anticorrelation formula") {
  auto m = association_scores({{1.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}}, 0.07);
  REQUIRE(m.targets == 1);
  REQUIRE(m.proposals == 2);
  CHECK(m.score_at(0, 0) == doctest::Approx(-100.0 / 7.0).epsilon(1e-12));
  CHECK(m.score_at(0, 1) == 0.0);
  CHECK(m.score_at(0, 2) == 0.0);  // no-association column pinned to zero

  auto p = association_probabilities(m);
  CHECK(p.prob_at(0, 0) < 1e-6);
  CHECK(p.prob_at(0, 1) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(p.prob_at(0, 2) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(p.prob_at(0, 0) + p.prob_at(0, 1) + p.prob_at(0, 2) ==
        doctest::Approx(1.0).epsilon(1e-9));

  auto pos = association_scores({{1.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}}, 0.07, false);
  CHECK(pos.score_at(0, 0) == doctest::Approx(100.0 / 7.0).epsilon(1e-12));

  CHECK_THROWS_AS(association_scores({{1.0}}, {{1.0, 0.0}}, 0.07), std::invalid_argument);
  CHECK_THROWS_AS(association_scores({{1.0}}, {{1.0}}, 0.0), std::invalid_argument);
}

TEST_CASE("association rows sum to one and stay positive") {
  Rng rng(515);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> q, f;
    for (int k = 0; k < 3; ++k) q.push_back(unit_vector(8, rng));
    for (int i = 0; i < 6; ++i) f.push_back(unit_vector(8, rng));
    auto p = association_probabilities(association_scores(q, f, 0.07));
    for (int k = 0; k < 3; ++k) {
      double sum = 0.0;
      for (int i = 0; i <= 6; ++i) {
        CHECK(p.prob_at(k, i) > 0.0);
        sum += p.prob_at(k, i);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("temperature rescaling preserves the per-row proposal ordering") {
  Rng rng(616);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> q, f;
    for (int k = 0; k < 3; ++k) q.push_back(unit_vector(8, rng));
    for (int i = 0; i < 8; ++i) f.push_back(unit_vector(8, rng));
    auto pa = association_probabilities(association_scores(q, f, 0.07));
    auto pb = association_probabilities(association_scores(q, f, 0.14));
    for (int k = 0; k < 3; ++k) {
      std::vector<int> oa(8), ob(8);
      std::iota(oa.begin(), oa.end(), 0);
      std::iota(ob.begin(), ob.end(), 0);
      std::stable_sort(oa.begin(), oa.end(),
                       [&](int a, int b) { return pa.prob_at(k, a) > pa.prob_at(k, b); });
      std::stable_sort(ob.begin(), ob.end(),
                       [&](int a, int b) { return pb.prob_at(k, a) > pb.prob_at(k, b); });
      CHECK(oa == ob);
    }
  }
}

TEST_CASE("object embeddings are unit norm and deterministic") {
  PlacementModel model(ModelConfig::toy(), 29);
  Image patch = random_image(8, 8, 4, 41);
  auto a = model.encode_object(patch);
  auto b = model.encode_object(patch);
  REQUIRE(static_cast<int>(a.feature.size()) == model.config().assoc_dim);
  CHECK(a.feature == b.feature);
  double norm = 0.0;
  for (double x : a.feature) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));

  // Odd sizes resize internally; RGB patches count as fully opaque.
  auto odd = model.encode_object(random_image(20, 14, 4, 42));
  CHECK(static_cast<int>(odd.feature.size()) == model.config().assoc_dim);
  auto rgb = model.encode_object(random_image(8, 8, 3, 43));
  norm = 0.0;
  for (double x : rgb.feature) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("independent policy can collide where greedy-distinct resolves") {
  // Columns: proposal 0, 1, 2, then the no-association slot.
  auto m = table_from_probabilities(2, 3,
                                    {0.60, 0.30, 0.05, 0.05,   //
                                     0.70, 0.20, 0.05, 0.05});
  auto boxes = dummy_boxes(3);

  auto ind = assign_from_probabilities(m, boxes, "independent");
  REQUIRE(ind.size() == 2);
  CHECK(ind[0].placed);
  CHECK(ind[1].placed);
  CHECK(ind[0].proposal_index == 0);
  CHECK(ind[1].proposal_index == 0);  // collision

  auto greedy = assign_from_probabilities(m, boxes, "greedy-distinct");
  CHECK(greedy[1].proposal_index == 0);  // higher confidence claims first
  CHECK(greedy[0].proposal_index == 1);
  CHECK(greedy[0].probability == doctest::Approx(0.30));
  CHECK(greedy[1].probability == doctest::Approx(0.70));

  CHECK_THROWS_AS(assign_from_probabilities(m, boxes, "always-place"), std::invalid_argument);
  CHECK_THROWS_AS(assign_from_probabilities(m, dummy_boxes(2), "independent"),
                  std::invalid_argument);
}

TEST_CASE("both policies honour the no-association column") {
  auto m = table_from_probabilities(1, 3, {0.10, 0.10, 0.10, 0.70});
  auto boxes = dummy_boxes(3);
  for (const char* policy : {"independent", "greedy-distinct"}) {
    auto out = assign_from_probabilities(m, boxes, policy);
    REQUIRE(out.size() == 1);
    CHECK_FALSE(out[0].placed);
    CHECK(out[0].proposal_index == -1);
    CHECK(out[0].probability == doctest::Approx(0.70));
  }
}

TEST_CASE("identical rows get distinct proposals under greedy-distinct") {
  auto m = table_from_probabilities(2, 3,
                                    {0.50, 0.30, 0.15, 0.05,   //
                                     0.50, 0.30, 0.15, 0.05});
  auto out = assign_from_probabilities(m, dummy_boxes(3), "greedy-distinct");
  CHECK(out[0].proposal_index == 0);  // equal confidence, first row claims first
  CHECK(out[1].proposal_index == 1);
}

TEST_CASE("single-object assignment is policy independent") {
  PlacementModel model(ModelConfig::toy(), 55);
  Image img = random_image(16, 16, 3, 56);
  auto proposals = model.detect(img, {});
  auto object = model.encode_object(random_image(8, 8, 4, 57));
  auto a = model.assign_objects(proposals, {object}, "independent");
  auto b = model.assign_objects(proposals, {object}, "greedy-distinct");
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(a[0].placed == b[0].placed);
  CHECK(a[0].proposal_index == b[0].proposal_index);
  CHECK(a[0].probability == doctest::Approx(b[0].probability));
}

TEST_CASE("ranked placements are sorted, capped, and never the null column") {
  auto m = table_from_probabilities(1, 3, {0.40, 0.10, 0.30, 0.20});
  auto boxes = dummy_boxes(3);

  auto top2 = rank_from_probabilities(m, 0, boxes, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].proposal_index == 0);
  CHECK(top2[1].proposal_index == 2);
  CHECK(top2[0].probability >= top2[1].probability);

  auto all = rank_from_probabilities(m, 0, boxes, 3);
  REQUIRE(all.size() == 3);
  CHECK(all[2].proposal_index == 1);

  auto tied = table_from_probabilities(1, 3, {0.30, 0.30, 0.30, 0.10});
  auto order = rank_from_probabilities(tied, 0, boxes, 3);
  CHECK(order[0].proposal_index == 0);
  CHECK(order[1].proposal_index == 1);
  CHECK(order[2].proposal_index == 2);

  CHECK_THROWS_AS(rank_from_probabilities(m, 0, boxes, 0), std::invalid_argument);
  CHECK_THROWS_AS(rank_from_probabilities(m, 0, boxes, 4), std::invalid_argument);
  CHECK_THROWS_AS(rank_from_probabilities(m, 1, boxes, 1), std::invalid_argument);
}

TEST_CASE("model-level ranking agrees with the assignment argmax") {
  PlacementModel model(ModelConfig::toy(), 61);
  Image img = random_image(16, 16, 3, 62);
  auto proposals = model.detect(img, {});
  auto object = model.encode_object(random_image(8, 8, 4, 63));
  auto ranked = model.rank_placements(proposals, object, model.config().num_queries);
  auto assigned = model.assign_objects(proposals, {object}, "independent");
  if (assigned[0].placed) {
    CHECK(assigned[0].proposal_index == ranked[0].proposal_index);
    CHECK(assigned[0].probability == doctest::Approx(ranked[0].probability));
  } else {
    CHECK(assigned[0].probability >= ranked[0].probability);
  }
  for (size_t i = 1; i < ranked.size(); ++i)
    CHECK(ranked[i - 1].probability >= ranked[i].probability);
}

TEST_CASE("composite pastes the patch inside the box and nowhere else") {
  Image bg = Image::blank(64, 64, 3);
  for (auto& p : bg.pixels) p = 30;
  Image patch = Image::blank(8, 8, 4);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      patch.at(x, y, 0) = 200;
      patch.at(x, y, 1) = 10;
      patch.at(x, y, 2) = 10;
      patch.at(x, y, 3) = 255;
    }

  Box box{0.5, 0.5, 0.25, 0.25};  // pixels [24, 40) in both axes
  Image out = composite(bg, patch, box);
  CHECK(out.at(32, 32, 0) == 200);
  CHECK(out.at(24, 24, 0) == 200);
  CHECK(out.at(39, 39, 0) == 200);
  CHECK(out.at(23, 32, 0) == 30);
  CHECK(out.at(40, 32, 0) == 30);
  CHECK(out.at(32, 23, 0) == 30);
  CHECK(out.at(0, 0, 0) == 30);

  CHECK_THROWS_AS(composite(bg, patch, Box{0.5, 0.5, 0.0, 0.2}), std::invalid_argument);

  Image ghost = patch;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ghost.at(x, y, 3) = 0;
  Image untouched = composite(bg, ghost, box);
  CHECK(untouched == bg);
}

TEST_CASE("location gating variant only reacts when scene boxes exist") {
  ModelConfig plain = ModelConfig::toy();
  ModelConfig gated = plain;
  gated.multiplicative_location_gating = true;
  PlacementModel a(plain, 71), b(gated, 71);
  Image img = random_image(16, 16, 3, 72);

  auto bare_a = a.detect(img, {});
  auto bare_b = b.detect(img, {});
  for (size_t i = 0; i < bare_a.size(); ++i) {
    CHECK(bare_a[i].box.cx == bare_b[i].box.cx);
    CHECK(bare_a[i].box.w == bare_b[i].box.w);
  }

  std::vector<Box> scene = dummy_boxes(2);
  auto with_a = a.detect(img, scene);
  auto with_b = b.detect(img, scene);
  bool boxes_differ = false;
  for (size_t i = 0; i < with_a.size(); ++i)
    if (std::abs(with_a[i].box.cx - with_b[i].box.cx) > 1e-12) boxes_differ = true;
  CHECK(boxes_differ);
  // Gating feeds the box head only; class probabilities stay untouched.
  for (size_t i = 0; i < with_a.size(); ++i)
    for (size_t c = 0; c < with_a[i].class_probs.size(); ++c)
      CHECK(with_a[i].class_probs[c] == doctest::Approx(with_b[i].class_probs[c]).epsilon(1e-12));
}

TEST_CASE("positive correlation flag flips the association preference") {
  ModelConfig neg_cfg = ModelConfig::toy();
  ModelConfig pos_cfg = neg_cfg;
  pos_cfg.positive_correlation = true;
  PlacementModel neg(neg_cfg, 81), pos(pos_cfg, 81);
  Image img = random_image(16, 16, 3, 82);
  auto proposals = neg.detect(img, {});
  auto object = neg.encode_object(random_image(8, 8, 4, 83));

  auto mn = neg.associate(proposals, {object});
  auto mp = pos.associate(proposals, {object});
  for (int i = 0; i < mn.proposals; ++i)
    CHECK(mn.score_at(0, i) == doctest::Approx(-mp.score_at(0, i)).epsilon(1e-9));
}

TEST_CASE("parameter groups split cleanly at the backbone prefix") {
  PlacementModel model(ModelConfig::toy(), 91);
  auto backbone = model.backbone_parameters();
  auto rest = model.non_backbone_parameters();
  CHECK(!backbone.empty());
  CHECK(!rest.empty());
  CHECK(backbone.size() + rest.size() == model.parameters().entries().size());
  int64_t total = 0;
  for (const auto& t : backbone) total += t.numel();
  for (const auto& t : rest) total += t.numel();
  CHECK(total == model.parameters().total_parameters());
}
