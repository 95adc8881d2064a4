#include "longdoc/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "longdoc/error.hpp"
#include "longdoc/rng.hpp"

namespace longdoc {
namespace {

const char* const kReservedTokens[kNumReserved] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

Error text_error(const std::string& msg) { return Error("text_pipeline", msg); }

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;  // UTF-8 continuation/lead bytes stay inside words
  return std::isspace(c) || std::ispunct(c);
}

// Splits at lines that are empty or whitespace-only.
std::vector<std::string_view> split_blank_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::size_t pos = 0;
  std::size_t para_start = 0;
  bool in_blank_run = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    bool blank = std::all_of(line.begin(), line.end(),
                             [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    if (blank) {
      if (!in_blank_run) {
        out.push_back(text.substr(para_start, pos - para_start));
        in_blank_run = true;
      }
    } else if (in_blank_run) {
      para_start = pos;
      in_blank_run = false;
    }
    start = eol + 1;
    pos = start;
  }
  if (!in_blank_run) out.push_back(text.substr(para_start));
  return out;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::single_label ? "single_label" : "multi_label";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "single_label" || s == "single") return TaskKind::single_label;
  if (s == "multi_label" || s == "multi") return TaskKind::multi_label;
  throw text_error("unknown task kind '" + std::string(s) + "'");
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.reserve(kNumReserved + tokens.size());
  for (const char* r : kReservedTokens) tokens_.emplace_back(r);
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw text_error("duplicate vocabulary entry '" + tokens_[i] + "'");
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw text_error("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

void TaskSpec::validate() const {
  if (kind == TaskKind::single_label && labels.size() < 2) {
    throw text_error("single_label task needs at least 2 labels");
  }
  if (labels.empty()) throw text_error("task has no labels");
  if (max_input_length < 1) throw text_error("max_input_length must be >= 1");
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) throw text_error("duplicate label names");
}

LabelId TaskSpec::label_id(std::string_view name) const {
  auto it = std::find(labels.begin(), labels.end(), name);
  if (it == labels.end()) throw text_error("unknown label '" + std::string(name) + "'");
  return static_cast<LabelId>(it - labels.begin());
}

std::vector<TokenId> Document::flat_tokens() const {
  std::vector<TokenId> out;
  for (const auto& p : paragraphs) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_separator(c)) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::vector<std::vector<TokenId>> tokenize_paragraphs(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  for (auto para : split_blank_lines(text)) {
    auto ids = tokenize(para, vocab);
    if (!ids.empty()) out.push_back(std::move(ids));
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_count, std::size_t max_size) {
  if (corpus.empty()) throw text_error("empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count && c > 0) kept.emplace_back(w, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_size > 0 && kept.size() > max_size) kept.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [w, c] : kept) {
    // Reserved spellings cannot be produced by split_words (brackets are punctuation).
    tokens.push_back(std::move(w));
  }
  return Vocabulary(tokens);
}

std::vector<std::vector<TokenId>> segment_paragraphs(const Document& doc, std::size_t max_segments,
                                                     std::size_t seg_len) {
  if (max_segments < 1) throw text_error("max_segments must be >= 1");
  if (seg_len < 2) throw text_error("seg_len must be >= 2");
  const std::size_t body = seg_len - 1;
  std::vector<std::vector<TokenId>> segments;
  for (const auto& para : doc.paragraphs) {
    for (std::size_t start = 0; start < para.size(); start += body) {
      if (segments.size() == max_segments) return segments;
      std::size_t end = std::min(para.size(), start + body);
      std::vector<TokenId> seg;
      seg.reserve(end - start + 1);
      seg.push_back(kCls);
      seg.insert(seg.end(), para.begin() + static_cast<std::ptrdiff_t>(start),
                 para.begin() + static_cast<std::ptrdiff_t>(end));
      segments.push_back(std::move(seg));
    }
  }
  if (segments.empty()) segments.push_back({kCls});
  return segments;
}

std::vector<RawDocument> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw text_error("cannot open dataset '" + path.string() + "'");
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
      continue;
    }
    auto where = [&] { return path.filename().string() + ":" + std::to_string(lineno) + ": "; };
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw text_error(where() + "malformed JSON (" + std::string(e.what()) + ")");
    }
    if (!obj.is_object()) throw text_error(where() + "expected a JSON object");
    RawDocument raw;
    try {
      if (obj.contains("id")) {
        raw.id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
      } else {
        raw.id = std::to_string(docs.size());
      }
      if (obj.contains("paragraphs")) {
        raw.paragraphs = obj["paragraphs"].get<std::vector<std::string>>();
      } else if (obj.contains("text")) {
        auto text = obj["text"].get<std::string>();
        for (auto p : split_blank_lines(text)) raw.paragraphs.emplace_back(p);
      } else {
        throw text_error(where() + "missing \"text\" or \"paragraphs\"");
      }
      if (obj.contains("labels")) raw.labels = obj["labels"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw text_error(where() + "schema violation (" + std::string(e.what()) + ")");
    }
    docs.push_back(std::move(raw));
  }
  return docs;
}

Document to_document(const RawDocument& raw, const Vocabulary& vocab, const TaskSpec& spec) {
  Document doc;
  doc.id = raw.id;
  for (const auto& p : raw.paragraphs) {
    auto ids = tokenize(p, vocab);
    if (!ids.empty()) {
      doc.raw_length += ids.size();
      doc.paragraphs.push_back(std::move(ids));
    }
  }
  if (doc.paragraphs.empty()) doc.paragraphs.emplace_back();
  for (const auto& name : raw.labels) doc.labels.push_back(spec.label_id(name));
  std::sort(doc.labels.begin(), doc.labels.end());
  doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()), doc.labels.end());
  if (spec.kind == TaskKind::single_label && doc.labels.size() != 1) {
    throw text_error("document '" + doc.id + "' must carry exactly one label in a single_label task");
  }
  return doc;
}

std::vector<Document> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                   const TaskSpec& spec) {
  auto raw = read_jsonl(path);
  std::vector<Document> docs;
  docs.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    try {
      docs.push_back(to_document(raw[i], vocab, spec));
    } catch (const Error& e) {
      throw text_error(path.filename().string() + ": document " + std::to_string(i + 1) + ": " + e.detail());
    }
  }
  return docs;
}

std::vector<std::string> corpus_texts(std::span<const RawDocument> docs) {
  std::vector<std::string> out;
  for (const auto& d : docs) out.insert(out.end(), d.paragraphs.begin(), d.paragraphs.end());
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.n_docs == 0 || o.n_classes == 0 || o.vocab_size == 0 || o.mean_len == 0) {
    throw text_error("synthetic corpus counts must be positive");
  }
  if (o.vocab_size < 10 * o.n_classes) throw text_error("vocabulary too small for class signals");
  if (o.n_classes < 2) throw text_error("synthetic corpus needs at least 2 classes");

  constexpr double kSignalRate = 0.15;
  constexpr double kSecondLabelRate = 0.35;
  constexpr double kNoLabelRate = 0.05;

  const std::size_t n_words = o.vocab_size - kNumReserved;
  const std::size_t per_class = std::max<std::size_t>(1, n_words / (5 * o.n_classes));
  const std::size_t noise_begin = per_class * o.n_classes;
  const std::size_t n_noise = n_words - noise_begin;

  SyntheticCorpus out;
  std::vector<std::string> words(n_words);
  for (std::size_t i = 0; i < n_words; ++i) words[i] = "w" + std::to_string(i);
  out.vocab = Vocabulary(words);
  out.task.kind = o.multi_label ? TaskKind::multi_label : TaskKind::single_label;
  for (std::size_t c = 0; c < o.n_classes; ++c) out.task.labels.push_back("c" + std::to_string(c));
  out.task.max_input_length = 512;

  // Zipf(1) over the shared noise words makes repeated tokens common.
  std::vector<double> cdf(n_noise);
  double total = 0.0;
  for (std::size_t r = 0; r < n_noise; ++r) cdf[r] = (total += 1.0 / static_cast<double>(r + 1));
  for (auto& v : cdf) v /= total;

  Rng rng(o.seed);
  auto word_id = [](std::size_t w) { return static_cast<TokenId>(w + kNumReserved); };
  for (std::size_t i = 0; i < o.n_docs; ++i) {
    Document doc;
    doc.id = "syn-" + std::to_string(i);
    const auto primary = static_cast<LabelId>(i % o.n_classes);
    LabelSet labels{primary};
    if (o.multi_label) {
      double u = rng.uniform();
      if (u < kNoLabelRate) {
        labels.clear();
      } else if (u < kNoLabelRate + kSecondLabelRate) {
        auto other = static_cast<LabelId>((primary + 1 + rng.index(o.n_classes - 1)) % o.n_classes);
        labels.push_back(other);
        std::sort(labels.begin(), labels.end());
      }
    }
    doc.labels = labels;

    const std::size_t n_paragraphs = 2 + static_cast<std::size_t>(rng.index(5));
    const auto length = std::max<std::size_t>(
        n_paragraphs, static_cast<std::size_t>(std::lround(static_cast<double>(o.mean_len) * (0.5 + rng.uniform()))));
    std::vector<double> weights(n_paragraphs);
    for (auto& w : weights) w = 0.5 + rng.uniform();
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < n_paragraphs; ++p) {
      std::size_t len = p + 1 == n_paragraphs
                            ? length - assigned
                            : std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(length) * weights[p] / wsum));
      len = std::min(len, length - assigned - (n_paragraphs - p - 1));
      assigned += len;
      std::vector<TokenId> para(len);
      for (auto& t : para) {
        if (!labels.empty() && rng.uniform() < kSignalRate) {
          auto cls = static_cast<std::size_t>(labels[rng.index(labels.size())]);
          t = word_id(cls * per_class + rng.index(per_class));
        } else {
          auto r = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), rng.uniform()) - cdf.begin());
          t = word_id(noise_begin + std::min(r, n_noise - 1));
        }
      }
      doc.paragraphs.push_back(std::move(para));
    }
    doc.raw_length = length;
    out.docs.push_back(std::move(doc));
  }
  return out;
}

std::string to_jsonl_line(const Document& doc, const Vocabulary& vocab, const TaskSpec& task) {
  std::string text;
  for (std::size_t p = 0; p < doc.paragraphs.size(); ++p) {
    if (p > 0) text += "\n\n";
    for (std::size_t i = 0; i < doc.paragraphs[p].size(); ++i) {
      if (i > 0) text += ' ';
      text += vocab.token(doc.paragraphs[p][i]);
    }
  }
  nlohmann::ordered_json obj;
  obj["id"] = doc.id;
  obj["text"] = text;
  auto labels = nlohmann::ordered_json::array();
  for (LabelId l : doc.labels) labels.push_back(task.labels.at(static_cast<std::size_t>(l)));
  obj["labels"] = labels;
  return obj.dump();
}

void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs, const Vocabulary& vocab,
                 const TaskSpec& task) {
  std::ofstream out(path);
  if (!out) throw text_error("cannot write '" + path.string() + "'");
  for (const auto& d : docs) out << to_jsonl_line(d, vocab, task) << '\n';
}

LengthStats length_stats(std::span<const Document> docs, bool dedup) {
  if (docs.empty()) throw text_error("length_stats on an empty dataset");
  LengthStats s;
  s.lengths.reserve(docs.size());
  double sum = 0.0;
  for (const auto& d : docs) {
    auto tokens = d.flat_tokens();
    std::size_t len = tokens.size();
    if (dedup) {
      std::sort(tokens.begin(), tokens.end());
      len = static_cast<std::size_t>(std::unique(tokens.begin(), tokens.end()) - tokens.begin());
    }
    s.lengths.push_back(len);
    sum += static_cast<double>(len);
    s.max = std::max(s.max, len);
  }
  s.mean = sum / static_cast<double>(docs.size());
  return s;
}

}  // namespace longdoc
