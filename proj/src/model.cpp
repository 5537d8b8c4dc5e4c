#include "bootplace/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "bootplace/ops.hpp"

namespace bootplace {

using diff::PadMode;
using diff::Tensor;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Sinusoidal position code for one axis coordinate, length d_axis (even).
void write_axis_encoding(double pos, int d_axis, double* out) {
  for (int i = 0; i < d_axis / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / d_axis);
    out[2 * i] = std::sin(pos * freq);
    out[2 * i + 1] = std::cos(pos * freq);
  }
}

Tensor image_to_tensor(const Image& image, int expect_channels, const char* what) {
  if (image.empty()) fail(std::string(what) + ": empty image");
  // An RGB patch fed to the RGBA encoder counts as fully opaque; any other
  // channel mismatch is a data bug.
  const bool pad_alpha = expect_channels == 4 && image.channels == 3;
  if (image.channels != expect_channels && !pad_alpha)
    fail(std::string(what) + ": expected " + std::to_string(expect_channels) +
         " channels, got " + std::to_string(image.channels));
  const size_t cells = static_cast<size_t>(image.width) * image.height;
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(expect_channels) * cells);
  for (int c = 0; c < image.channels; ++c)
    for (size_t i = 0; i < cells; ++i)
      flat.push_back(image.pixels[i * image.channels + c] / 255.0);
  if (pad_alpha) flat.insert(flat.end(), cells, 1.0);
  return Tensor::from_values({expect_channels, image.height, image.width}, std::move(flat));
}

std::vector<double> tensor_row(const Tensor& t, int row) {
  const int cols = t.dim(1);
  std::vector<double> out(cols);
  for (int c = 0; c < cols; ++c) out[c] = t.value_at(static_cast<size_t>(row) * cols + c);
  return out;
}

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.image_size = 256;
  cfg.backbone_channels = {64, 128, 256};
  cfg.backbone_preset = "conv3-wide";
  cfg.model_dim = 256;
  cfg.encoder_blocks = 6;
  cfg.decoder_blocks = 6;
  cfg.num_heads = 8;
  cfg.ffn_dim = 2048;
  cfg.num_queries = 100;
  cfg.max_scene_objects = 120;
  cfg.assoc_dim = 256;
  cfg.patch_size = 64;
  return cfg;
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.backbone_channels = {8, 8, 8};
  cfg.backbone_preset = "conv3-toy";
  cfg.model_dim = 8;
  cfg.encoder_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  cfg.num_queries = 4;
  cfg.max_scene_objects = 8;
  cfg.assoc_dim = 8;
  cfg.patch_size = 8;
  return cfg;
}

void ModelConfig::validate() const {
  if (image_size < 8) fail("model config: image_size too small");
  if (channels != 3) fail("model config: only 3-channel scene images are supported");
  if (backbone_channels.empty()) fail("model config: backbone needs at least one stage");
  for (int c : backbone_channels)
    if (c < 1) fail("model config: backbone channel counts must be positive");
  if (image_size % (1 << backbone_stages()) != 0)
    fail("model config: image_size must be divisible by 2^stages");
  if (patch_size % (1 << backbone_stages()) != 0)
    fail("model config: patch_size must be divisible by 2^stages");
  if (model_dim < 4 || model_dim % 4 != 0)
    fail("model config: model_dim must be a positive multiple of 4");
  if (num_heads < 1 || model_dim % num_heads != 0)
    fail("model config: model_dim must divide evenly into heads");
  if (encoder_blocks < 1 || decoder_blocks < 1) fail("model config: need at least one block");
  if (ffn_dim < 1) fail("model config: ffn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) fail("model config: dropout must be in [0, 1)");
  if (num_queries < 1) fail("model config: need at least one region query");
  if (max_scene_objects < 0) fail("model config: max_scene_objects must be non-negative");
  if (num_classes < 1) fail("model config: need at least one object class");
  if (assoc_dim < 1) fail("model config: assoc_dim must be positive");
  if (temperature <= 0.0) fail("model config: temperature must be positive");
}

AssociationMatrix association_scores(const std::vector<std::vector<double>>& q_rows,
                                     const std::vector<std::vector<double>>& f_rows, double mu,
                                     bool negative_correlation) {
  if (mu <= 0.0) fail("association: temperature must be positive");
  const int t = static_cast<int>(q_rows.size());
  const int n = static_cast<int>(f_rows.size());
  size_t dim = t > 0 ? q_rows[0].size() : (n > 0 ? f_rows[0].size() : 0);
  for (const auto& q : q_rows)
    if (q.size() != dim) fail("association: ragged query rows");
  for (const auto& f : f_rows)
    if (f.size() != dim) fail("association: feature width does not match query width");
  const double sign = negative_correlation ? -1.0 : 1.0;

  AssociationMatrix m;
  m.targets = t;
  m.proposals = n;
  m.scores.assign(static_cast<size_t>(t) * (n + 1), 0.0);
  for (int k = 0; k < t; ++k) {
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (size_t c = 0; c < dim; ++c) dot += q_rows[k][c] * f_rows[i][c];
      m.scores[static_cast<size_t>(k) * (n + 1) + i] = sign * dot / mu;
    }
    // Trailing no-association column stays exactly 0.
  }
  return m;
}

AssociationMatrix association_probabilities(AssociationMatrix m) {
  const int cols = m.proposals + 1;
  m.probabilities.assign(m.scores.size(), 0.0);
  for (int k = 0; k < m.targets; ++k) {
    const double* row = m.scores.data() + static_cast<size_t>(k) * cols;
    double* out = m.probabilities.data() + static_cast<size_t>(k) * cols;
    double mx = row[0];
    for (int i = 1; i < cols; ++i) mx = std::max(mx, row[i]);
    double denom = 0.0;
    for (int i = 0; i < cols; ++i) denom += std::exp(row[i] - mx);
    for (int i = 0; i < cols; ++i) out[i] = std::exp(row[i] - mx) / denom;
  }
  return m;
}

std::vector<PlacementDecision> assign_from_probabilities(const AssociationMatrix& m,
                                                         const std::vector<Box>& proposal_boxes,
                                                         const std::string& policy) {
  if (static_cast<int>(proposal_boxes.size()) != m.proposals)
    fail("assign: box list does not match the proposal count");
  if (m.probabilities.size() != m.scores.size())
    fail("assign: probabilities not computed");
  const int cols = m.proposals + 1;

  auto decide = [&](int k, int pick) {
    PlacementDecision d;
    d.probability = m.prob_at(k, pick);
    if (pick < m.proposals) {
      d.placed = true;
      d.proposal_index = pick;
      d.box = proposal_boxes[pick];
    }
    return d;
  };

  std::vector<PlacementDecision> out(m.targets);
  if (policy == "independent") {
    for (int k = 0; k < m.targets; ++k) {
      int best = 0;
      for (int i = 1; i < cols; ++i)
        if (m.prob_at(k, i) > m.prob_at(k, best)) best = i;
      out[k] = decide(k, best);
    }
    return out;
  }
  if (policy == "greedy-distinct") {
    // Most confident rows claim first; a claimed proposal is off the table,
    // the no-association column never is.
    std::vector<int> order(m.targets);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      double ma = 0.0, mb = 0.0;
      for (int i = 0; i < cols; ++i) {
        ma = std::max(ma, m.prob_at(a, i));
        mb = std::max(mb, m.prob_at(b, i));
      }
      return ma > mb;
    });
    std::vector<char> claimed(m.proposals, 0);
    for (int k : order) {
      int best = m.proposals;  // no-association fallback, always available
      for (int i = 0; i < m.proposals; ++i) {
        if (claimed[i]) continue;
        if (m.prob_at(k, i) > m.prob_at(k, best)) best = i;
      }
      // Ties between a proposal and the no-association column favor placing.
      if (best == m.proposals) {
        for (int i = 0; i < m.proposals; ++i)
          if (!claimed[i] && m.prob_at(k, i) == m.prob_at(k, m.proposals)) {
            best = i;
            break;
          }
      }
      if (best < m.proposals) claimed[best] = 1;
      out[k] = decide(k, best);
    }
    return out;
  }
  fail("assign: unknown policy \"" + policy + "\" (use independent or greedy-distinct)");
}

std::vector<RankedPlacement> rank_from_probabilities(const AssociationMatrix& m, int target_index,
                                                     const std::vector<Box>& proposal_boxes,
                                                     int k) {
  if (static_cast<int>(proposal_boxes.size()) != m.proposals)
    fail("rank: box list does not match the proposal count");
  if (m.probabilities.size() != m.scores.size()) fail("rank: probabilities not computed");
  if (target_index < 0 || target_index >= m.targets) fail("rank: target index out of range");
  if (k < 1 || k > m.proposals)
    fail("rank: k must be between 1 and the proposal count");

  std::vector<int> order(m.proposals);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return m.prob_at(target_index, a) > m.prob_at(target_index, b);
  });
  std::vector<RankedPlacement> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    RankedPlacement r;
    r.proposal_index = order[i];
    r.box = proposal_boxes[order[i]];
    r.probability = m.prob_at(target_index, order[i]);
    out.push_back(r);
  }
  return out;
}

Image composite(const Image& background, const Image& object_patch, const Box& box) {
  if (background.empty() || object_patch.empty()) fail("composite: empty image");
  const int pw = static_cast<int>(std::lround(box.w * background.width));
  const int ph = static_cast<int>(std::lround(box.h * background.height));
  if (pw < 1 || ph < 1) fail("composite: box has zero pixel area");
  Image resized = resize_bilinear(object_patch, pw, ph);
  Image out = background;
  const int x0 = static_cast<int>(std::lround((box.cx - box.w / 2.0) * background.width));
  const int y0 = static_cast<int>(std::lround((box.cy - box.h / 2.0) * background.height));
  alpha_paste(out, resized, x0, y0);
  return out;
}

// ---------------------------------------------------------------------------
// PlacementModel

PlacementModel::PlacementModel(ModelConfig cfg, uint64_t init_seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng = Rng::derive(init_seed, 0x6d6f64656c);  // independent init stream
  const int d = cfg_.model_dim;

  int in_ch = cfg_.channels;
  for (size_t s = 0; s < cfg_.backbone_channels.size(); ++s) {
    backbone_convs_.push_back(nn::Conv::create(store_, "backbone.stage" + std::to_string(s),
                                               in_ch, cfg_.backbone_channels[s], 3, 2, 1,
                                               PadMode::kReplicate, rng));
    in_ch = cfg_.backbone_channels[s];
  }
  backbone_proj_ =
      nn::Conv::create(store_, "backbone.proj", in_ch, d, 1, 1, 0, PadMode::kZero, rng);
  backbone_norm_ = nn::LayerNorm::create(store_, "backbone.norm", d);

  location_lin0_ = nn::Linear::create(store_, "location.mlp.lin0", 4, d, rng);
  location_lin1_ = nn::Linear::create(store_, "location.mlp.lin1", d, d, rng);
  location_type_embedding_ = store_.create("location.type_embedding", {d});
  for (auto& v : location_type_embedding_.values()) v = rng.normal(0.0, 0.02);

  query_embedding_ = store_.create("decoder.queries", {cfg_.num_queries, d});
  for (auto& v : query_embedding_.values()) v = rng.normal(0.0, 0.02);

  auto make_block = [&](const std::string& prefix, bool cross) {
    Block b;
    b.self_q = nn::Linear::create(store_, prefix + ".self_attn.q", d, d, rng);
    b.self_k = nn::Linear::create(store_, prefix + ".self_attn.k", d, d, rng);
    b.self_v = nn::Linear::create(store_, prefix + ".self_attn.v", d, d, rng);
    b.self_o = nn::Linear::create(store_, prefix + ".self_attn.o", d, d, rng);
    b.norm1 = nn::LayerNorm::create(store_, prefix + ".norm1", d);
    if (cross) {
      b.cross_q = nn::Linear::create(store_, prefix + ".cross_attn.q", d, d, rng);
      b.cross_k = nn::Linear::create(store_, prefix + ".cross_attn.k", d, d, rng);
      b.cross_v = nn::Linear::create(store_, prefix + ".cross_attn.v", d, d, rng);
      b.cross_o = nn::Linear::create(store_, prefix + ".cross_attn.o", d, d, rng);
      b.norm3 = nn::LayerNorm::create(store_, prefix + ".norm3", d);
    }
    b.norm2 = nn::LayerNorm::create(store_, prefix + ".norm2", d);
    b.ffn0 = nn::Linear::create(store_, prefix + ".ffn.lin0", d, cfg_.ffn_dim, rng);
    b.ffn1 = nn::Linear::create(store_, prefix + ".ffn.lin1", cfg_.ffn_dim, d, rng);
    b.has_cross = cross;
    return b;
  };
  for (int i = 0; i < cfg_.encoder_blocks; ++i)
    encoder_.push_back(make_block("encoder.block" + std::to_string(i), false));
  for (int i = 0; i < cfg_.decoder_blocks; ++i)
    decoder_.push_back(make_block("decoder.block" + std::to_string(i), true));

  class_head_ = nn::Linear::create(store_, "heads.class", d, cfg_.num_classes + 1, rng);
  box_head0_ = nn::Linear::create(store_, "heads.box.lin0", d, d, rng);
  box_head1_ = nn::Linear::create(store_, "heads.box.lin1", d, d, rng);
  box_head2_ = nn::Linear::create(store_, "heads.box.lin2", d, 4, rng);
  feature_head_ = nn::Linear::create(store_, "heads.feature", d, cfg_.assoc_dim, rng);

  in_ch = 4;  // object patches carry alpha
  for (size_t s = 0; s < cfg_.backbone_channels.size(); ++s) {
    object_convs_.push_back(nn::Conv::create(store_, "object_encoder.stage" + std::to_string(s),
                                             in_ch, cfg_.backbone_channels[s], 3, 2, 1,
                                             PadMode::kReplicate, rng));
    in_ch = cfg_.backbone_channels[s];
  }
  object_proj_ = nn::Linear::create(store_, "object_encoder.proj", in_ch, cfg_.assoc_dim, rng);

  // Fixed sinusoidal grid code, half the width per axis.
  const int g = cfg_.grid_size();
  std::vector<double> pe(static_cast<size_t>(g) * g * d);
  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) {
      double* row = pe.data() + (static_cast<size_t>(y) * g + x) * d;
      write_axis_encoding(y, d / 2, row);
      write_axis_encoding(x, d / 2, row + d / 2);
    }
  positional_encoding_ = Tensor::from_values({g * g, d}, std::move(pe));
}

std::vector<Tensor> PlacementModel::backbone_parameters() const {
  return store_.tensors_with_prefix("backbone.");
}

std::vector<Tensor> PlacementModel::non_backbone_parameters() const {
  return store_.tensors_without_prefix("backbone.");
}

Tensor PlacementModel::backbone_tokens(const Image& image) const {
  if (image.width != cfg_.image_size || image.height != cfg_.image_size)
    fail("detect: image must be " + std::to_string(cfg_.image_size) + "x" +
         std::to_string(cfg_.image_size));
  Tensor x = image_to_tensor(image, cfg_.channels, "detect");
  for (const auto& conv : backbone_convs_) x = diff::gelu(conv.forward(x));
  x = backbone_proj_.forward(x);  // [d, g, g]
  const int g = cfg_.grid_size();
  Tensor tokens = diff::transpose(diff::reshape(x, {cfg_.model_dim, g * g}));
  // The conv stack has no normalization, so its output runs much smaller than
  // the unit-scale position code; normalizing per token keeps the image
  // content and the position code at comparable magnitude.
  tokens = backbone_norm_.forward(tokens);
  return diff::add(tokens, positional_encoding_);
}

Tensor PlacementModel::location_tokens(const std::vector<Box>& scene_boxes) const {
  std::vector<double> flat;
  flat.reserve(scene_boxes.size() * 4);
  for (const Box& b : scene_boxes) {
    flat.push_back(b.cx);
    flat.push_back(b.cy);
    flat.push_back(b.w);
    flat.push_back(b.h);
  }
  Tensor coords = Tensor::from_values({static_cast<int>(scene_boxes.size()), 4}, std::move(flat));
  Tensor h = location_lin1_.forward(diff::gelu(location_lin0_.forward(coords)));
  return diff::add_row_vector(h, location_type_embedding_);
}

DetectionOutput PlacementModel::forward_detect(const Image& image,
                                               const std::vector<Box>& scene_boxes,
                                               bool training, Rng* dropout_rng) const {
  if (static_cast<int>(scene_boxes.size()) > cfg_.max_scene_objects)
    fail("detect: scene object count " + std::to_string(scene_boxes.size()) +
         " exceeds the budget of " + std::to_string(cfg_.max_scene_objects));
  if (training && cfg_.dropout > 0.0 && dropout_rng == nullptr)
    fail("detect: training mode needs a dropout rng");

  auto drop = [&](const Tensor& t) {
    if (!training || cfg_.dropout <= 0.0) return t;
    return diff::dropout(t, cfg_.dropout, true, *dropout_rng);
  };
  auto attend = [&](const Tensor& q_in, const Tensor& kv_in, const nn::Linear& lq,
                    const nn::Linear& lk, const nn::Linear& lv, const nn::Linear& lo,
                    diff::AttentionCapture* capture) {
    Tensor heads = diff::multi_head_attention(lq.forward(q_in), lk.forward(kv_in),
                                              lv.forward(kv_in), cfg_.num_heads, capture);
    return lo.forward(heads);
  };
  auto ffn = [&](const Block& b, const Tensor& x) {
    return b.ffn1.forward(drop(diff::gelu(b.ffn0.forward(x))));
  };

  Tensor memory = backbone_tokens(image);
  Tensor loc;
  if (!scene_boxes.empty()) {
    loc = location_tokens(scene_boxes);
    memory = diff::concat_rows({memory, loc});
  }
  for (const Block& b : encoder_) {
    memory = b.norm1.forward(
        diff::add(memory, drop(attend(memory, memory, b.self_q, b.self_k, b.self_v, b.self_o,
                                      nullptr))));
    memory = b.norm2.forward(diff::add(memory, drop(ffn(b, memory))));
  }

  Tensor q = query_embedding_;
  diff::AttentionCapture capture;
  for (size_t i = 0; i < decoder_.size(); ++i) {
    const Block& b = decoder_[i];
    diff::AttentionCapture* cap = (i + 1 == decoder_.size()) ? &capture : nullptr;
    q = b.norm1.forward(
        diff::add(q, drop(attend(q, q, b.self_q, b.self_k, b.self_v, b.self_o, nullptr))));
    q = b.norm2.forward(diff::add(
        q, drop(attend(q, memory, b.cross_q, b.cross_k, b.cross_v, b.cross_o, cap))));
    q = b.norm3.forward(diff::add(q, drop(ffn(b, q))));
  }

  DetectionOutput out;
  out.class_logits = class_head_.forward(q);
  out.class_probs = diff::softmax(out.class_logits, 1);

  Tensor box_in = q;
  if (cfg_.multiplicative_location_gating && !scene_boxes.empty()) {
    const int k = loc.dim(0);
    Tensor pool = Tensor::full({1, k}, 1.0 / k);
    Tensor gate = diff::reshape(diff::matmul(pool, loc), {cfg_.model_dim});
    box_in = diff::mul_row_vector(q, gate);
  }
  out.boxes = diff::sigmoid(
      box_head2_.forward(diff::gelu(box_head1_.forward(diff::gelu(box_head0_.forward(box_in))))));
  out.features = diff::l2_normalize_rows(feature_head_.forward(q));

  Tensor attn_sum = capture.head_weights[0];
  for (size_t h = 1; h < capture.head_weights.size(); ++h)
    attn_sum = diff::add(attn_sum, capture.head_weights[h]);
  out.cross_attention = diff::mul_const(attn_sum, 1.0 / capture.head_weights.size());
  out.memory_tokens = memory.dim(0);
  out.grid_tokens = cfg_.grid_tokens();
  return out;
}

Tensor PlacementModel::forward_object(const Image& patch) const {
  if (patch.empty()) fail("encode_object: empty patch");
  Image resized = (patch.width == cfg_.patch_size && patch.height == cfg_.patch_size)
                      ? patch
                      : resize_bilinear(patch, cfg_.patch_size, cfg_.patch_size);
  Tensor x = image_to_tensor(resized, 4, "encode_object");
  for (const auto& conv : object_convs_) x = diff::gelu(conv.forward(x));
  const int ch = x.dim(0), cells = x.dim(1) * x.dim(2);
  Tensor pooled = diff::transpose(
      diff::matmul(diff::reshape(x, {ch, cells}), Tensor::full({cells, 1}, 1.0 / cells)));
  return diff::l2_normalize_rows(object_proj_.forward(pooled));  // [1, D]
}

Tensor PlacementModel::association_graph(const Tensor& q, const Tensor& f) const {
  const double sign = cfg_.positive_correlation ? 1.0 : -1.0;
  Tensor scores = diff::mul_const(diff::matmul(q, diff::transpose(f)), sign / cfg_.temperature);
  Tensor with_null = diff::concat_cols({scores, Tensor::zeros({q.dim(0), 1})});
  return diff::softmax(with_null, 1);
}

std::vector<RegionProposal> PlacementModel::detect(const Image& image,
                                                   const std::vector<Box>& scene_boxes) const {
  diff::NoGradGuard guard;
  DetectionOutput out = forward_detect(image, scene_boxes, false, nullptr);
  std::vector<RegionProposal> proposals(cfg_.num_queries);
  for (int i = 0; i < cfg_.num_queries; ++i) {
    auto b = tensor_row(out.boxes, i);
    proposals[i].box = Box{b[0], b[1], b[2], b[3]};
    proposals[i].class_probs = tensor_row(out.class_probs, i);
    proposals[i].feature = tensor_row(out.features, i);
  }
  return proposals;
}

ObjectQueryEmbedding PlacementModel::encode_object(const Image& patch) const {
  diff::NoGradGuard guard;
  Tensor q = forward_object(patch);
  ObjectQueryEmbedding e;
  e.feature = tensor_row(q, 0);
  e.source_patch = (patch.width == cfg_.patch_size && patch.height == cfg_.patch_size)
                       ? patch
                       : resize_bilinear(patch, cfg_.patch_size, cfg_.patch_size);
  return e;
}

AssociationMatrix PlacementModel::associate(const std::vector<RegionProposal>& proposals,
                                            const std::vector<ObjectQueryEmbedding>& objects) const {
  std::vector<std::vector<double>> q_rows, f_rows;
  q_rows.reserve(objects.size());
  f_rows.reserve(proposals.size());
  for (const auto& o : objects) q_rows.push_back(o.feature);
  for (const auto& p : proposals) f_rows.push_back(p.feature);
  return association_probabilities(
      association_scores(q_rows, f_rows, cfg_.temperature, !cfg_.positive_correlation));
}

std::vector<PlacementDecision> PlacementModel::assign_objects(
    const std::vector<RegionProposal>& proposals, const std::vector<ObjectQueryEmbedding>& objects,
    const std::string& policy) const {
  AssociationMatrix m = associate(proposals, objects);
  std::vector<Box> boxes;
  boxes.reserve(proposals.size());
  for (const auto& p : proposals) boxes.push_back(p.box);
  return assign_from_probabilities(m, boxes, policy);
}

std::vector<RankedPlacement> PlacementModel::rank_placements(
    const std::vector<RegionProposal>& proposals, const ObjectQueryEmbedding& object,
    int k) const {
  AssociationMatrix m = associate(proposals, {object});
  std::vector<Box> boxes;
  boxes.reserve(proposals.size());
  for (const auto& p : proposals) boxes.push_back(p.box);
  return rank_from_probabilities(m, 0, boxes, k);
}

}  // namespace bootplace
