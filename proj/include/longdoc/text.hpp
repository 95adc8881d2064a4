#pragma once

// Tokenization, vocabulary, dataset ingestion, the synthetic corpus generator
// and length statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace longdoc {

using TokenId = std::int32_t;
using LabelId = std::int32_t;
// Sorted, duplicate-free.
using LabelSet = std::vector<LabelId>;

enum class TaskKind { single_label, multi_label };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view s);

// Reserved ids, identical in every vocabulary.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr std::size_t kNumReserved = 4;

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  // `tokens` excludes the reserved entries; ids are assigned in order after them.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  // Non-reserved tokens in id order.
  std::vector<std::string> words() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TaskSpec {
  TaskKind kind = TaskKind::single_label;
  std::vector<std::string> labels;
  std::size_t max_input_length = 512;

  void validate() const;
  std::size_t num_labels() const noexcept { return labels.size(); }
  LabelId label_id(std::string_view name) const;  // throws naming the label
};

struct Document {
  std::string id;
  std::vector<std::vector<TokenId>> paragraphs;
  LabelSet labels;
  std::size_t raw_length = 0;

  // Paragraphs concatenated in order.
  std::vector<TokenId> flat_tokens() const;
};

// Lowercased ASCII; split on whitespace and ASCII punctuation, which is dropped.
std::vector<std::string> split_words(std::string_view text);
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);
// Paragraph boundaries at blank lines. Paragraphs without tokens are dropped.
std::vector<std::vector<TokenId>> tokenize_paragraphs(std::string_view text, const Vocabulary& vocab);

// Tokens with frequency >= min_count ordered by (frequency desc, token asc),
// at most max_size of them (0 = unlimited), after the reserved ids.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_count,
                       std::size_t max_size = 0);

// One paragraph per segment, long paragraphs split greedily. Each segment is
// [CLS] + up to seg_len-1 tokens; at most max_segments are returned.
std::vector<std::vector<TokenId>> segment_paragraphs(const Document& doc, std::size_t max_segments,
                                                     std::size_t seg_len);

struct RawDocument {
  std::string id;
  std::vector<std::string> paragraphs;  // already split
  std::vector<std::string> labels;
};

// JSON lines with "id", "text" or "paragraphs", and "labels".
std::vector<RawDocument> read_jsonl(const std::filesystem::path& path);
Document to_document(const RawDocument& raw, const Vocabulary& vocab, const TaskSpec& spec);
std::vector<Document> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                   const TaskSpec& spec);

// All paragraph texts of a raw corpus, for build_vocab.
std::vector<std::string> corpus_texts(std::span<const RawDocument> docs);

struct SyntheticOptions {
  std::size_t n_docs = 1000;
  std::size_t n_classes = 4;
  std::size_t vocab_size = 2000;  // total, including reserved ids
  std::size_t mean_len = 600;
  bool multi_label = false;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  TaskSpec task;
  Vocabulary vocab;
  std::vector<Document> docs;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

// One JSON object per document, paragraphs joined by blank lines under "text".
std::string to_jsonl_line(const Document& doc, const Vocabulary& vocab, const TaskSpec& task);
void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs,
                 const Vocabulary& vocab, const TaskSpec& task);

struct LengthStats {
  std::vector<std::size_t> lengths;
  double mean = 0.0;
  std::size_t max = 0;
};

// With dedup, a document's length is its number of distinct token ids.
LengthStats length_stats(std::span<const Document> docs, bool dedup);

}  // namespace longdoc
