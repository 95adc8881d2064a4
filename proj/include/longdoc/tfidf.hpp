#pragma once

// TF-IDF over word n-grams: f_i = (c_i / n) * ln(N / (1 + d_i)), optionally
// with sublinear TF (1 + ln c_i). Also the dedup-and-sort transform and
// quantile bucketization of per-token scores.

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "longdoc/text.hpp"

namespace longdoc {

using Ngram = std::vector<TokenId>;

struct NgramHash {
  std::size_t operator()(const Ngram& g) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (TokenId t : g) {
      h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(t));
      h *= 1099511628211ull;
    }
    return h;
  }
};

struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;  // ascending
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  double at(std::size_t i) const;  // 0 for unstored components
};

class TfidfModel {
 public:
  TfidfModel() = default;
  TfidfModel(std::size_t num_docs, std::size_t n_max, bool sublinear, std::vector<Ngram> features,
             std::vector<std::size_t> doc_freq);

  std::size_t num_docs() const noexcept { return num_docs_; }
  std::size_t n_max() const noexcept { return n_max_; }
  bool sublinear() const noexcept { return sublinear_; }
  std::size_t num_features() const noexcept { return features_.size(); }
  const std::vector<Ngram>& features() const noexcept { return features_; }
  const std::vector<std::size_t>& doc_freqs() const noexcept { return doc_freq_; }

  std::optional<std::size_t> feature_index(const Ngram& g) const;
  // d_i, or 0 for a feature outside the model.
  std::size_t doc_freq(const Ngram& g) const;
  std::size_t doc_freq(TokenId unigram) const;
  // ln(N / (1 + d)).
  double idf_from_df(std::size_t df) const;
  // Score for a feature occurring `count` times in a document of `length` tokens.
  double score_from_counts(std::size_t count, std::size_t length, std::size_t df) const;

 private:
  std::size_t num_docs_ = 0;
  std::size_t n_max_ = 1;
  bool sublinear_ = false;
  std::vector<Ngram> features_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<Ngram, std::size_t, NgramHash> index_;
};

struct TfidfOptions {
  std::size_t n_max = 1;
  // Number of features kept, by corpus frequency. 0 keeps every n-gram.
  std::size_t top_k = 0;
  bool sublinear = false;
};

// Each training document is one token stream.
TfidfModel fit_tfidf(std::span<const std::vector<TokenId>> train_docs, const TfidfOptions& options);

// Count of `feature` in `doc`, for any n-gram length.
std::size_t count_occurrences(const Ngram& feature, std::span<const TokenId> doc);

double tfidf_score(const TfidfModel& model, const Ngram& feature, std::span<const TokenId> doc);

SparseVector featurize_vector(const TfidfModel& model, std::span<const TokenId> doc);

// Unigram score of every distinct token in `tokens`, TF taken before dedup.
std::unordered_map<TokenId, double> unigram_scores(const TfidfModel& model, std::span<const TokenId> tokens);

// One occurrence per distinct token, by decreasing score then ascending id,
// truncated to max_len.
std::vector<TokenId> dedup_sort(const TfidfModel& model, std::span<const TokenId> tokens, std::size_t max_len);

class BucketModel {
 public:
  BucketModel() = default;
  explicit BucketModel(std::vector<double> boundaries);

  std::size_t num_buckets() const noexcept { return boundaries_.size() + 1; }
  const std::vector<double>& boundaries() const noexcept { return boundaries_; }

 private:
  std::vector<double> boundaries_;
};

// Empirical quantiles at k/B (linear interpolation) of every per-occurrence
// unigram score in the training set.
BucketModel fit_buckets(const TfidfModel& model, std::span<const std::vector<TokenId>> train_docs,
                        std::size_t num_buckets);
// Quantiles of an explicit pooled score sample.
BucketModel fit_buckets_from_scores(std::vector<double> scores, std::size_t num_buckets);

// Number of boundaries strictly below `score`.
std::size_t bucket_of(const BucketModel& bm, double score);

}  // namespace longdoc
