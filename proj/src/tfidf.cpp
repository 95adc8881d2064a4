#include "longdoc/tfidf.hpp"

#include <algorithm>
#include <cmath>

#include "longdoc/error.hpp"

namespace longdoc {
namespace {

Error tfidf_error(const std::string& msg) { return Error("tfidf", msg); }

struct NgramCounts {
  std::size_t corpus_freq = 0;
  std::size_t doc_freq = 0;
  std::size_t last_doc = SIZE_MAX;
};

}  // namespace

double SparseVector::at(std::size_t i) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), static_cast<std::uint32_t>(i));
  if (it == indices.end() || *it != i) return 0.0;
  return values[static_cast<std::size_t>(it - indices.begin())];
}

TfidfModel::TfidfModel(std::size_t num_docs, std::size_t n_max, bool sublinear, std::vector<Ngram> features,
                       std::vector<std::size_t> doc_freq)
    : num_docs_(num_docs),
      n_max_(n_max),
      sublinear_(sublinear),
      features_(std::move(features)),
      doc_freq_(std::move(doc_freq)) {
  if (features_.size() != doc_freq_.size()) throw tfidf_error("feature/document-frequency size mismatch");
  if (num_docs_ == 0) throw tfidf_error("model needs N >= 1");
  index_.reserve(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& g = features_[i];
    if (g.empty() || g.size() > n_max_) throw tfidf_error("feature length outside [1, n_max]");
    if (doc_freq_[i] < 1 || doc_freq_[i] > num_docs_) throw tfidf_error("document frequency outside [1, N]");
    if (!index_.emplace(g, i).second) throw tfidf_error("duplicate feature");
  }
}

std::optional<std::size_t> TfidfModel::feature_index(const Ngram& g) const {
  auto it = index_.find(g);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t TfidfModel::doc_freq(const Ngram& g) const {
  auto idx = feature_index(g);
  return idx ? doc_freq_[*idx] : 0;
}

std::size_t TfidfModel::doc_freq(TokenId unigram) const { return doc_freq(Ngram{unigram}); }

double TfidfModel::idf_from_df(std::size_t df) const {
  return std::log(static_cast<double>(num_docs_) / (1.0 + static_cast<double>(df)));
}

double TfidfModel::score_from_counts(std::size_t count, std::size_t length, std::size_t df) const {
  if (count == 0) return 0.0;
  const double tf = sublinear_ ? 1.0 + std::log(static_cast<double>(count))
                               : static_cast<double>(count) / static_cast<double>(length);
  return tf * idf_from_df(df);
}

TfidfModel fit_tfidf(std::span<const std::vector<TokenId>> train_docs, const TfidfOptions& options) {
  if (train_docs.empty()) throw tfidf_error("empty training set");
  if (options.n_max < 1) throw tfidf_error("n_max must be >= 1");

  std::unordered_map<Ngram, NgramCounts, NgramHash> counts;
  Ngram key;
  for (std::size_t d = 0; d < train_docs.size(); ++d) {
    const auto& doc = train_docs[d];
    for (std::size_t n = 1; n <= options.n_max; ++n) {
      for (std::size_t i = 0; i + n <= doc.size(); ++i) {
        key.assign(doc.begin() + static_cast<std::ptrdiff_t>(i), doc.begin() + static_cast<std::ptrdiff_t>(i + n));
        auto it = counts.find(key);
        if (it == counts.end()) it = counts.emplace(key, NgramCounts{}).first;
        auto& c = it->second;
        ++c.corpus_freq;
        if (c.last_doc != d) {
          c.last_doc = d;
          ++c.doc_freq;
        }
      }
    }
  }

  std::vector<std::pair<const Ngram*, const NgramCounts*>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [g, c] : counts) ranked.emplace_back(&g, &c);
  auto by_frequency = [](const auto& a, const auto& b) {
    if (a.second->corpus_freq != b.second->corpus_freq) return a.second->corpus_freq > b.second->corpus_freq;
    return *a.first < *b.first;
  };
  std::size_t keep = options.top_k == 0 ? ranked.size() : std::min(options.top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), by_frequency);

  std::vector<Ngram> features;
  std::vector<std::size_t> df;
  features.reserve(keep);
  df.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    features.push_back(*ranked[i].first);
    df.push_back(ranked[i].second->doc_freq);
  }
  return TfidfModel(train_docs.size(), options.n_max, options.sublinear, std::move(features), std::move(df));
}

std::size_t count_occurrences(const Ngram& feature, std::span<const TokenId> doc) {
  if (feature.empty() || feature.size() > doc.size()) return 0;
  std::size_t c = 0;
  for (std::size_t i = 0; i + feature.size() <= doc.size(); ++i) {
    if (std::equal(feature.begin(), feature.end(), doc.begin() + static_cast<std::ptrdiff_t>(i))) ++c;
  }
  return c;
}

double tfidf_score(const TfidfModel& model, const Ngram& feature, std::span<const TokenId> doc) {
  if (doc.empty()) throw tfidf_error("zero-length document");
  return model.score_from_counts(count_occurrences(feature, doc), doc.size(), model.doc_freq(feature));
}

SparseVector featurize_vector(const TfidfModel& model, std::span<const TokenId> doc) {
  if (doc.empty()) throw tfidf_error("zero-length document");
  std::unordered_map<std::size_t, std::size_t> feature_counts;
  Ngram key;
  for (std::size_t n = 1; n <= model.n_max(); ++n) {
    for (std::size_t i = 0; i + n <= doc.size(); ++i) {
      key.assign(doc.begin() + static_cast<std::ptrdiff_t>(i), doc.begin() + static_cast<std::ptrdiff_t>(i + n));
      if (auto idx = model.feature_index(key)) ++feature_counts[*idx];
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> sorted(feature_counts.begin(), feature_counts.end());
  std::sort(sorted.begin(), sorted.end());

  SparseVector v;
  v.dim = model.num_features();
  v.indices.reserve(sorted.size());
  v.values.reserve(sorted.size());
  for (auto [idx, count] : sorted) {
    v.indices.push_back(static_cast<std::uint32_t>(idx));
    v.values.push_back(model.score_from_counts(count, doc.size(), model.doc_freqs()[idx]));
  }
  return v;
}

std::unordered_map<TokenId, double> unigram_scores(const TfidfModel& model, std::span<const TokenId> tokens) {
  std::unordered_map<TokenId, std::size_t> counts;
  for (TokenId t : tokens) ++counts[t];
  std::unordered_map<TokenId, double> scores;
  scores.reserve(counts.size());
  for (auto [t, c] : counts) scores.emplace(t, model.score_from_counts(c, tokens.size(), model.doc_freq(t)));
  return scores;
}

std::vector<TokenId> dedup_sort(const TfidfModel& model, std::span<const TokenId> tokens, std::size_t max_len) {
  if (tokens.empty()) return {};
  auto scores = unigram_scores(model, tokens);
  std::vector<std::pair<TokenId, double>> ranked(scores.begin(), scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_len) ranked.resize(max_len);
  std::vector<TokenId> out;
  out.reserve(ranked.size());
  for (const auto& [t, s] : ranked) out.push_back(t);
  return out;
}

BucketModel::BucketModel(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
  if (!std::is_sorted(boundaries_.begin(), boundaries_.end())) {
    throw tfidf_error("bucket boundaries must be nondecreasing");
  }
}

BucketModel fit_buckets_from_scores(std::vector<double> scores, std::size_t num_buckets) {
  if (num_buckets < 1) throw tfidf_error("bucket count must be >= 1");
  if (scores.empty()) throw tfidf_error("no training scores to bucketize");
  std::sort(scores.begin(), scores.end());
  const double last = static_cast<double>(scores.size() - 1);
  std::vector<double> boundaries;
  boundaries.reserve(num_buckets - 1);
  for (std::size_t k = 1; k < num_buckets; ++k) {
    const double h = static_cast<double>(k) / static_cast<double>(num_buckets) * last;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    boundaries.push_back(scores[lo] + (h - static_cast<double>(lo)) * (scores[hi] - scores[lo]));
  }
  return BucketModel(std::move(boundaries));
}

BucketModel fit_buckets(const TfidfModel& model, std::span<const std::vector<TokenId>> train_docs,
                        std::size_t num_buckets) {
  if (num_buckets < 1) throw tfidf_error("bucket count must be >= 1");
  std::vector<double> pooled;
  for (const auto& doc : train_docs) {
    if (doc.empty()) continue;
    auto scores = unigram_scores(model, doc);
    for (TokenId t : doc) pooled.push_back(scores.at(t));
  }
  return fit_buckets_from_scores(std::move(pooled), num_buckets);
}

std::size_t bucket_of(const BucketModel& bm, double score) {
  const auto& b = bm.boundaries();
  return static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), score) - b.begin());
}

}  // namespace longdoc
