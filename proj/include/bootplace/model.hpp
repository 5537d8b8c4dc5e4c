#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bootplace/geometry.hpp"
#include "bootplace/image.hpp"
#include "bootplace/nn.hpp"
#include "bootplace/rng.hpp"
#include "bootplace/tensor.hpp"

namespace bootplace {

struct ModelConfig {
  int image_size = 64;
  int channels = 3;
  // One stride-2 stage per entry; the token grid is image_size / 2^stages.
  std::vector<int> backbone_channels = {16, 32, 64};
  std::string backbone_preset = "conv3";
  int model_dim = 64;  // d; width of every token
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int num_heads = 4;
  int ffn_dim = 256;
  double dropout = 0.1;
  int num_queries = 16;        // N region queries
  int max_scene_objects = 32;  // M; encode_locations rejects more
  int num_classes = 2;         // C real classes; class C is the no-object slot
  int assoc_dim = 64;          // D; association feature width
  double temperature = 0.07;   // mu
  int patch_size = 32;         // object-encoder input resolution
  // Ablation: score proposals by positive instead of negative correlation.
  bool positive_correlation = false;
  // Variant where pooled location embeddings gate the box-head input
  // multiplicatively instead of only joining the token sequence.
  bool multiplicative_location_gating = false;

  static ModelConfig desk();
  static ModelConfig paper();
  // Miniature configuration for finite-difference tests: d=8, N=4, 16x16
  // images, single encoder/decoder blocks.
  static ModelConfig toy();

  void validate() const;  // throws std::invalid_argument
  int backbone_stages() const { return static_cast<int>(backbone_channels.size()); }
  int grid_size() const { return image_size >> backbone_stages(); }
  int grid_tokens() const { return grid_size() * grid_size(); }
  int no_object_class() const { return num_classes; }

  bool operator==(const ModelConfig&) const = default;
};

// One detected region: where it is, what it likely holds, and the feature
// used by the association head.
struct RegionProposal {
  Box box;
  std::vector<double> class_probs;  // C+1 entries, sums to 1
  std::vector<double> feature;      // D entries, unit norm
};

struct ObjectQueryEmbedding {
  std::vector<double> feature;  // D entries, unit norm
  Image source_patch;           // resized patch the embedding came from
};

// Scores and row-softmax probabilities over proposals plus the trailing
// no-association column (index == proposals).
struct AssociationMatrix {
  int targets = 0;
  int proposals = 0;
  std::vector<double> scores;         // targets x (proposals+1)
  std::vector<double> probabilities;  // same layout; empty until computed

  double score_at(int k, int i) const {
    return scores[static_cast<size_t>(k) * (proposals + 1) + i];
  }
  double prob_at(int k, int i) const {
    return probabilities[static_cast<size_t>(k) * (proposals + 1) + i];
  }
};

// scores[k][i] = sign * (q_k . f_i) / mu with sign = -1 by default (negative
// correlation); the trailing column is pinned to 0. Rows of f are expected
// L2-normalized, as are the q vectors.
AssociationMatrix association_scores(const std::vector<std::vector<double>>& q_rows,
                                     const std::vector<std::vector<double>>& f_rows, double mu,
                                     bool negative_correlation = true);

// Fills the row-wise softmax over proposals+1 entries.
AssociationMatrix association_probabilities(AssociationMatrix m);

struct PlacementDecision {
  bool placed = false;     // false: the no-association column won
  int proposal_index = -1;
  Box box;
  double probability = 0.0;
};

struct RankedPlacement {
  int proposal_index = -1;
  Box box;
  double probability = 0.0;
};

// Picks a proposal (or none) for every target row of the probability table.
// policy "independent": per-row argmax, collisions possible;
// policy "greedy-distinct": rows in descending max-probability order, each
// claiming an unclaimed proposal.
std::vector<PlacementDecision> assign_from_probabilities(const AssociationMatrix& m,
                                                         const std::vector<Box>& proposal_boxes,
                                                         const std::string& policy);

// Top-k proposals for one target row, by probability descending, ties by
// proposal index; the no-association column never participates.
std::vector<RankedPlacement> rank_from_probabilities(const AssociationMatrix& m, int target_index,
                                                     const std::vector<Box>& proposal_boxes,
                                                     int k);

// Copy-paste composition: patch resized to the box extent, alpha-blended.
// Throws on a zero-area box.
Image composite(const Image& background, const Image& object_patch, const Box& box);

// Graph-tensor outputs of a detection pass; inference wrappers and the
// training loss both consume this.
struct DetectionOutput {
  diff::Tensor class_logits;     // [N, C+1]
  diff::Tensor class_probs;      // [N, C+1]
  diff::Tensor boxes;            // [N, 4], squashed into (0,1)
  diff::Tensor features;         // [N, D], rows unit-norm
  diff::Tensor cross_attention;  // [N, memory]; head-averaged, last block
  int memory_tokens = 0;
  int grid_tokens = 0;
};

class PlacementModel {
 public:
  PlacementModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  std::vector<diff::Tensor> backbone_parameters() const;
  std::vector<diff::Tensor> non_backbone_parameters() const;

  // Graph paths. dropout_rng may be null when training is false.
  // Grid tokens with the position code added, [grid_tokens, model_dim].
  diff::Tensor backbone_tokens(const Image& image) const;
  DetectionOutput forward_detect(const Image& image, const std::vector<Box>& scene_boxes,
                                 bool training = false, Rng* dropout_rng = nullptr) const;
  // [1, D] unit-norm embedding of one object patch.
  diff::Tensor forward_object(const Image& patch) const;
  // [T, N+1] association probabilities from stacked object embeddings
  // q: [T, D] and proposal features f: [N, D].
  diff::Tensor association_graph(const diff::Tensor& q, const diff::Tensor& f) const;

  // Numeric inference (no graph retained).
  std::vector<RegionProposal> detect(const Image& image,
                                     const std::vector<Box>& scene_boxes) const;
  ObjectQueryEmbedding encode_object(const Image& patch) const;
  AssociationMatrix associate(const std::vector<RegionProposal>& proposals,
                              const std::vector<ObjectQueryEmbedding>& objects) const;
  std::vector<PlacementDecision> assign_objects(const std::vector<RegionProposal>& proposals,
                                                const std::vector<ObjectQueryEmbedding>& objects,
                                                const std::string& policy) const;
  std::vector<RankedPlacement> rank_placements(const std::vector<RegionProposal>& proposals,
                                               const ObjectQueryEmbedding& object, int k) const;

 private:
  diff::Tensor location_tokens(const std::vector<Box>& scene_boxes) const;

  ModelConfig cfg_;
  nn::ParameterStore store_;

  // Layer handles into store_; built once in the constructor.
  std::vector<nn::Conv> backbone_convs_;
  nn::Conv backbone_proj_;
  nn::LayerNorm backbone_norm_;
  nn::Linear location_lin0_, location_lin1_;
  diff::Tensor location_type_embedding_;  // [d]
  diff::Tensor query_embedding_;          // [N, d]
  diff::Tensor positional_encoding_;      // [grid_tokens, d], constant

  struct Block {
    nn::Linear self_q, self_k, self_v, self_o;
    nn::Linear cross_q, cross_k, cross_v, cross_o;  // decoder only
    nn::LayerNorm norm1, norm2, norm3;              // norm3 decoder only
    nn::Linear ffn0, ffn1;
    bool has_cross = false;
  };
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;

  nn::Linear class_head_;
  nn::Linear box_head0_, box_head1_, box_head2_;
  nn::Linear feature_head_;

  std::vector<nn::Conv> object_convs_;
  nn::Linear object_proj_;
};

}  // namespace bootplace
