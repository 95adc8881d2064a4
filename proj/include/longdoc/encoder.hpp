#pragma once

// Transformer encoder for document classification.
//
// One configuration type covers every model family in the library:
//   flat_dense    full self-attention over [CLS] + tokens (BERT-style)
//   flat_sparse   sliding-window attention with CLS / paragraph-SEP globals
//   hierarchical  shared flat_dense encoder per segment, then segment-level
//                 blocks over the segment CLS vectors and pooling
// combined with an optional dedup-and-sort input transform and optional
// TF-IDF bucket embeddings. Blocks are post-layer-norm: LN(x + Attn(x)),
// then LN(h + FFN(h)) with a GELU feedforward.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "longdoc/attention.hpp"
#include "longdoc/layers.hpp"
#include "longdoc/matrix.hpp"
#include "longdoc/text.hpp"

namespace longdoc {

enum class Variant { flat_dense, flat_sparse, hierarchical };
enum class BowTransform { none, dedup_sort };
enum class Pooling { first, max };

std::string_view to_string(Variant v);
std::string_view to_string(BowTransform b);
std::string_view to_string(Pooling p);
Variant parse_variant_kind(std::string_view s);
BowTransform parse_bow_transform(std::string_view s);
Pooling parse_pooling(std::string_view s);

struct EncoderConfig {
  std::size_t vocab_size = 0;
  AttentionConfig attention{};
  std::size_t layers = 2;
  std::size_t ff_dim = 64;
  std::size_t max_positions = 512;
  bool use_tfidf_embeddings = false;
  std::size_t buckets = 0;
  Variant variant = Variant::flat_dense;
  BowTransform bow_transform = BowTransform::none;
  TaskKind task_kind = TaskKind::single_label;
  std::size_t num_labels = 2;
  // Hierarchical only.
  std::size_t max_segments = 8;
  std::size_t segment_len = 128;
  std::size_t segment_layers = 2;
  Pooling pooling = Pooling::max;
  double layer_norm_eps = 1e-12;

  std::size_t model_dim() const noexcept { return attention.model_dim(); }
  // Longest token sequence a single encoder pass accepts.
  std::size_t max_sequence_length() const noexcept {
    return variant == Variant::hierarchical ? segment_len : max_positions;
  }
  void validate() const;
};

struct BlockWeights {
  Matrix wq, wk, wv, wo;
  Matrix bq, bk, bv, bo;
  // Present only with separate global projections.
  Matrix wq_global, wk_global, wv_global;
  Matrix bq_global, bk_global, bv_global;
  Matrix ln1_gain, ln1_bias;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gain, ln2_bias;

  bool has_global() const noexcept { return !wq_global.empty(); }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "wq", self.wq);
    f(prefix + "bq", self.bq);
    f(prefix + "wk", self.wk);
    f(prefix + "bk", self.bk);
    f(prefix + "wv", self.wv);
    f(prefix + "bv", self.bv);
    if (self.has_global()) {
      f(prefix + "wq_global", self.wq_global);
      f(prefix + "bq_global", self.bq_global);
      f(prefix + "wk_global", self.wk_global);
      f(prefix + "bk_global", self.bk_global);
      f(prefix + "wv_global", self.wv_global);
      f(prefix + "bv_global", self.bv_global);
    }
    f(prefix + "wo", self.wo);
    f(prefix + "bo", self.bo);
    f(prefix + "ln1_gain", self.ln1_gain);
    f(prefix + "ln1_bias", self.ln1_bias);
    f(prefix + "w1", self.w1);
    f(prefix + "b1", self.b1);
    f(prefix + "w2", self.w2);
    f(prefix + "b2", self.b2);
    f(prefix + "ln2_gain", self.ln2_gain);
    f(prefix + "ln2_bias", self.ln2_bias);
  }
};

struct ModelState {
  Matrix token_embeddings;      // |V| × d
  Matrix position_embeddings;   // max_positions × d
  Matrix bucket_embeddings;     // B × d, empty unless TF-IDF embeddings are on
  Matrix embedding_ln_gain, embedding_ln_bias;
  std::vector<BlockWeights> blocks;
  Matrix segment_position_embeddings;  // max_segments × d, hierarchical with segment blocks
  std::vector<BlockWeights> segment_blocks;
  Matrix classifier_weights;  // labels × d
  Matrix classifier_bias;     // 1 × labels

  // Calls f(name, matrix) for every learnable array in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  // Same structure, all zeros.
  ModelState zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("token_embeddings"), self.token_embeddings);
    f(std::string("position_embeddings"), self.position_embeddings);
    if (!self.bucket_embeddings.empty()) f(std::string("bucket_embeddings"), self.bucket_embeddings);
    f(std::string("embedding_ln_gain"), self.embedding_ln_gain);
    f(std::string("embedding_ln_bias"), self.embedding_ln_bias);
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      BlockWeights::visit(self.blocks[l], "blocks." + std::to_string(l) + ".", f);
    }
    if (!self.segment_position_embeddings.empty()) {
      f(std::string("segment_position_embeddings"), self.segment_position_embeddings);
    }
    for (std::size_t l = 0; l < self.segment_blocks.size(); ++l) {
      BlockWeights::visit(self.segment_blocks[l], "segment_blocks." + std::to_string(l) + ".", f);
    }
    f(std::string("classifier_weights"), self.classifier_weights);
    f(std::string("classifier_bias"), self.classifier_bias);
  }
};

// Closed-form count of learnable scalars for a configuration.
std::size_t analytic_parameter_count(const EncoderConfig& config);

// Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1. Separate global
// projections start as copies of the local ones.
ModelState init_state(const EncoderConfig& config, std::uint64_t seed);

// Checks every array against the shapes the configuration implies.
void check_state(const EncoderConfig& config, const ModelState& state);

struct Model {
  EncoderConfig config;
  ModelState state;
};

// Token ids plus optional per-token TF-IDF bucket (-1 = no bucket embedding).
struct SequenceInput {
  std::vector<TokenId> tokens;
  std::vector<std::int32_t> buckets;
};

// One sequence for flat variants, one per segment for hierarchical.
struct ModelInput {
  std::vector<SequenceInput> segments;
};

struct Example {
  ModelInput input;
  LabelSet labels;
};

// token + position (+ bucket) before the embedding layer norm.
Matrix embedding_sum(const Model& model, const SequenceInput& input);
Matrix embed(const Model& model, const SequenceInput& input);

// Contextualized CLS vector of one sequence, using the flat attention pattern
// of the variant (full for flat_dense and for hierarchical segments).
std::vector<double> encode(const Model& model, const SequenceInput& input);

std::vector<double> hierarchical_encode(const Model& model, std::span<const SequenceInput> segments,
                                        Pooling pooling);

std::vector<double> logits(const Model& model, const ModelInput& input);
LabelSet predict(const Model& model, const ModelInput& input);

struct LossResult {
  double loss = 0.0;
  Matrix logits;  // batch × labels
};

// Mean over the batch of softmax cross-entropy (single_label) or mean
// per-label sigmoid binary cross-entropy (multi_label).
LossResult forward_loss(const Model& model, std::span<const Example> batch);

// Exact gradient of forward_loss with respect to every array of the state.
ModelState backward(const Model& model, std::span<const Example> batch);

// Loss and gradient in one pass; gradients are accumulated into `grads`.
LossResult forward_backward(const Model& model, std::span<const Example> batch, ModelState& grads);

// Bytes held by the forward cache of one example (activation memory proxy).
std::size_t activation_bytes(const Model& model, const ModelInput& input);

}  // namespace longdoc
