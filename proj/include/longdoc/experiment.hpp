#pragma once

// Named model variants and the end-to-end pipeline: vocabulary and TF-IDF
// fitting, input construction per variant, training and evaluation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longdoc/encoder.hpp"
#include "longdoc/linear.hpp"
#include "longdoc/text.hpp"
#include "longdoc/tfidf.hpp"
#include "longdoc/train_eval.hpp"

namespace longdoc {

struct VariantPreset {
  std::string name;
  std::vector<std::string> aliases;
  bool linear = false;
  Variant variant = Variant::flat_dense;
  BowTransform bow_transform = BowTransform::none;
  bool tfidf_embeddings = false;
  std::size_t max_len = 512;
  std::size_t window = 512;
  GlobalMode global_mode = GlobalMode::cls_only;
  // Built by extending a trained flat_dense checkpoint passed as `init`.
  bool warm_start = false;
  std::string description;
};

const std::vector<VariantPreset>& variant_presets();
// Accepts canonical names and aliases, case-insensitively.
const VariantPreset& find_preset(std::string_view name);

struct ExperimentConfig {
  std::string variant = "tfidf-svm";
  std::uint64_t seed = 0;
  std::size_t num_seeds = 5;

  // Vocabulary.
  std::size_t min_count = 1;
  std::size_t vocab_max_size = 0;

  // TF-IDF (linear baseline features).
  std::size_t n_max = 3;
  std::size_t top_k = 20000;
  bool sublinear = false;
  bool search_top_k = false;

  // Linear baseline.
  double reg = 1.0;
  std::size_t svm_epochs = 15;

  // Encoder.
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ff_dim = 64;
  std::optional<std::size_t> max_len;
  std::optional<std::size_t> window;
  std::optional<GlobalMode> global_mode;
  bool separate_global_projection = false;
  std::size_t buckets = 32;
  bool search_buckets = false;
  std::size_t max_segments = 8;
  std::size_t segment_len = 128;
  std::size_t segment_layers = 2;
  Pooling pooling = Pooling::max;

  TrainConfig train{};

  std::vector<std::uint64_t> seed_list() const;
  // Encoder configuration implied by the preset plus overrides.
  EncoderConfig encoder_config(const VariantPreset& preset, std::size_t vocab_size, const TaskSpec& task) const;
  std::map<std::string, std::string> settings() const;
};

struct Splits {
  std::string name;
  TaskSpec task;
  std::vector<RawDocument> train, dev, test;
};

// <dir>/task.json plus train.jsonl, dev.jsonl and test.jsonl.
Splits load_splits(const std::filesystem::path& dir);

// Everything needed to classify new documents.
struct Checkpoint {
  std::string variant;
  TaskSpec task;
  Vocabulary vocab;
  std::optional<TfidfModel> tfidf;  // linear features, or unigram scores for dedup/buckets
  std::optional<BucketModel> buckets;
  std::optional<LinearModel> linear;
  std::optional<Model> encoder;
};

// Builds encoder inputs for one configuration.
class InputBuilder {
 public:
  InputBuilder(const EncoderConfig& config, const TfidfModel* tfidf, const BucketModel* buckets);

  ModelInput build(const Document& doc) const;
  SequenceInput flat_sequence(const Document& doc) const;
  std::vector<Example> examples(std::span<const Document> docs) const;

 private:
  std::vector<std::int32_t> bucket_ids(std::span<const TokenId> tokens,
                                       const std::unordered_map<TokenId, double>& scores) const;

  EncoderConfig config_;
  const TfidfModel* tfidf_;
  const BucketModel* buckets_;
};

// Raw token stream of a document with a SEP after every paragraph.
std::vector<TokenId> tokens_with_separators(const Document& doc);

std::vector<LabelSet> predict_all(const Checkpoint& ckpt, std::span<const Document> docs);
F1Scores evaluate_checkpoint(const Checkpoint& ckpt, std::span<const Document> docs);

struct ExperimentResult {
  EvalReport report;
  Checkpoint checkpoint;
};

// Trains the configured variant on splits.train, selects on splits.dev and
// scores dev and test. `init` replaces the freshly initialized encoder (for
// warm-started models); its configuration is used as is.
ExperimentResult run_experiment(const Splits& splits, const ExperimentConfig& config,
                                const std::optional<Checkpoint>& init = std::nullopt);

}  // namespace longdoc
