#include "longdoc/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "longdoc/error.hpp"
#include "longdoc/serialization.hpp"
#include "longdoc/warm_start.hpp"

namespace longdoc {
namespace {

Error experiment_error(const std::string& msg) { return Error("experiment", msg); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <class T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::vector<Document> to_documents(std::span<const RawDocument> raw, const Vocabulary& vocab, const TaskSpec& task) {
  std::vector<Document> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(to_document(r, vocab, task));
  return out;
}

std::vector<std::vector<TokenId>> flat_streams(std::span<const Document> docs) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.flat_tokens());
  return out;
}

SparseVector linear_features(const TfidfModel& tfidf, const Document& doc) {
  const auto tokens = doc.flat_tokens();
  SparseVector v;
  if (tokens.empty()) {
    v.dim = tfidf.num_features();
    return v;
  }
  v = featurize_vector(tfidf, tokens);
  l2_normalize(v);
  return v;
}

std::vector<LabelSet> gold_labels(std::span<const Document> docs) {
  std::vector<LabelSet> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.labels);
  return out;
}

struct LinearFit {
  TfidfModel tfidf;
  LinearModel model;
};

LinearFit fit_linear(std::span<const Document> train, const TaskSpec& task, const ExperimentConfig& cfg,
                     std::size_t top_k) {
  const auto streams = flat_streams(train);
  std::vector<std::vector<TokenId>> nonempty;
  for (const auto& s : streams) {
    if (!s.empty()) nonempty.push_back(s);
  }
  LinearFit fit;
  fit.tfidf = fit_tfidf(nonempty, TfidfOptions{cfg.n_max, top_k, cfg.sublinear});
  std::vector<SparseVector> x;
  x.reserve(train.size());
  for (const auto& d : train) x.push_back(linear_features(fit.tfidf, d));
  const auto y = gold_labels(train);
  fit.model = train_linear(x, y, task, LinearOptions{cfg.reg, cfg.svm_epochs, cfg.seed, 1.0}).model;
  return fit;
}

void add_scores(EvalReport& report, const Checkpoint& ckpt, std::span<const Document> dev,
                std::span<const Document> test) {
  report.splits["dev"] = evaluate_checkpoint(ckpt, dev);
  if (!test.empty()) report.splits["test"] = evaluate_checkpoint(ckpt, test);
}

}  // namespace

const std::vector<VariantPreset>& variant_presets() {
  static const std::vector<VariantPreset> presets = [] {
    std::vector<VariantPreset> p;
    auto add = [&](VariantPreset v) { p.push_back(std::move(v)); };
    add({"tfidf-svm", {"svm"}, true, Variant::flat_dense, BowTransform::none, false, 0, 0, GlobalMode::cls_only, false,
         "linear SVM over top-K word 1-3 gram TF-IDF features"});
    add({"legalbert", {"bert", "legal-bert"}, false, Variant::flat_dense, BowTransform::none, false, 512, 512,
         GlobalMode::cls_only, false, "dense encoder over the first 512 tokens"});
    add({"hier-legalbert", {"hier-bert", "hierarchical"}, false, Variant::hierarchical, BowTransform::none, false, 512,
         512, GlobalMode::cls_only, false, "segment encoder plus segment-level blocks and pooling"});
    add({"tfidf-srt-legalbert", {"tfidf-srt"}, false, Variant::flat_dense, BowTransform::dedup_sort, false, 512, 512,
         GlobalMode::cls_only, false, "deduplicated tokens sorted by decreasing TF-IDF"});
    add({"tfidf-srt-emb-legalbert", {"tfidf-srt-emb"}, false, Variant::flat_dense, BowTransform::dedup_sort, true, 512,
         512, GlobalMode::cls_only, false, "tfidf-srt plus TF-IDF bucket embeddings"});
    add({"tfidf-emb-legalbert", {"tfidf-emb"}, false, Variant::flat_dense, BowTransform::none, true, 512, 512,
         GlobalMode::cls_only, false, "original token order plus TF-IDF bucket embeddings"});
    add({"longformer", {}, false, Variant::flat_sparse, BowTransform::none, false, 4096, 512, GlobalMode::cls_only,
         false, "sliding-window attention, 4096 positions, window 512"});
    add({"longformer-8192", {}, false, Variant::flat_sparse, BowTransform::none, false, 8192, 128,
         GlobalMode::cls_only, false, "8192 positions, window 128"});
    add({"longformer-8192-par", {}, false, Variant::flat_sparse, BowTransform::none, false, 8192, 128,
         GlobalMode::cls_and_paragraph_sep, false, "longformer-8192 with a global SEP after every paragraph"});
    add({"legal-longformer", {"legallongformer"}, false, Variant::flat_sparse, BowTransform::none, false, 4096, 512,
         GlobalMode::cls_only, true, "longformer warm-started from a legalbert checkpoint"});
    add({"legal-longformer-8192", {"legallongformer-8192"}, false, Variant::flat_sparse, BowTransform::none, false, 8192,
         128, GlobalMode::cls_only, true, "longformer-8192 warm-started from a legalbert checkpoint"});
    add({"legal-longformer-8192-par", {"legallongformer-8192-par"}, false, Variant::flat_sparse, BowTransform::none,
         false, 8192, 128, GlobalMode::cls_and_paragraph_sep, true,
         "longformer-8192-par warm-started from a legalbert checkpoint"});
    return p;
  }();
  return presets;
}

const VariantPreset& find_preset(std::string_view name) {
  const std::string key = lower(name);
  for (const auto& p : variant_presets()) {
    if (p.name == key) return p;
    for (const auto& a : p.aliases) {
      if (a == key) return p;
    }
  }
  throw experiment_error("unknown variant '" + std::string(name) + "'");
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  if (num_seeds < 1) throw experiment_error("num_seeds must be >= 1");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < num_seeds; ++i) out.push_back(seed + i);
  return out;
}

EncoderConfig ExperimentConfig::encoder_config(const VariantPreset& preset, std::size_t vocab_size,
                                               const TaskSpec& task) const {
  if (preset.linear) throw experiment_error("variant '" + preset.name + "' is not an encoder");
  if (heads < 1 || dim % heads != 0) throw experiment_error("dim must be a positive multiple of heads");
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.attention.heads = heads;
  c.attention.head_dim = dim / heads;
  c.attention.window = window.value_or(preset.window);
  c.attention.global_mode = global_mode.value_or(preset.global_mode);
  c.attention.separate_global_projection = separate_global_projection;
  c.layers = layers;
  c.ff_dim = ff_dim;
  c.variant = preset.variant;
  c.bow_transform = preset.bow_transform;
  c.use_tfidf_embeddings = preset.tfidf_embeddings;
  c.buckets = preset.tfidf_embeddings ? buckets : 0;
  c.task_kind = task.kind;
  c.num_labels = task.num_labels();
  c.max_segments = max_segments;
  c.segment_len = segment_len;
  c.segment_layers = segment_layers;
  c.pooling = pooling;
  c.max_positions = preset.variant == Variant::hierarchical ? segment_len : max_len.value_or(preset.max_len);
  c.validate();
  return c;
}

std::map<std::string, std::string> ExperimentConfig::settings() const {
  std::map<std::string, std::string> s;
  s["variant"] = variant;
  s["seed"] = str(seed);
  s["num_seeds"] = str(num_seeds);
  s["min_count"] = str(min_count);
  s["vocab_max_size"] = str(vocab_max_size);
  const auto& preset = find_preset(variant);
  if (preset.linear) {
    s["n_max"] = str(n_max);
    s["top_k"] = str(top_k);
    s["sublinear"] = sublinear ? "true" : "false";
    s["reg"] = str(reg);
    s["svm_epochs"] = str(svm_epochs);
    return s;
  }
  s["dim"] = str(dim);
  s["heads"] = str(heads);
  s["layers"] = str(layers);
  s["ff_dim"] = str(ff_dim);
  s["max_len"] = str(max_len.value_or(preset.max_len));
  s["window"] = str(window.value_or(preset.window));
  s["global_mode"] = std::string(to_string(global_mode.value_or(preset.global_mode)));
  s["separate_global_projection"] = separate_global_projection ? "true" : "false";
  if (preset.tfidf_embeddings) s["buckets"] = str(buckets);
  if (preset.variant == Variant::hierarchical) {
    s["max_segments"] = str(max_segments);
    s["segment_len"] = str(segment_len);
    s["segment_layers"] = str(segment_layers);
    s["pooling"] = std::string(to_string(pooling));
  }
  s["lr"] = str(train.adam.learning_rate);
  s["max_epochs"] = str(train.max_epochs);
  s["patience"] = str(train.patience);
  s["batch_size"] = str(train.batch_size);
  return s;
}

Splits load_splits(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw experiment_error("data directory not found: " + dir.string());
  Splits s;
  s.name = dir.filename().string();
  if (s.name.empty()) s.name = dir.parent_path().filename().string();
  s.task = read_task(dir / "task.json");
  s.train = read_jsonl(dir / "train.jsonl");
  s.dev = read_jsonl(dir / "dev.jsonl");
  if (std::filesystem::exists(dir / "test.jsonl")) s.test = read_jsonl(dir / "test.jsonl");
  return s;
}

std::vector<TokenId> tokens_with_separators(const Document& doc) {
  std::vector<TokenId> out;
  for (const auto& p : doc.paragraphs) {
    if (p.empty()) continue;
    out.insert(out.end(), p.begin(), p.end());
    out.push_back(kSep);
  }
  return out;
}

InputBuilder::InputBuilder(const EncoderConfig& config, const TfidfModel* tfidf, const BucketModel* buckets)
    : config_(config), tfidf_(tfidf), buckets_(buckets) {
  if (config_.bow_transform == BowTransform::dedup_sort && tfidf_ == nullptr) {
    throw experiment_error("dedup_sort inputs need a TF-IDF model");
  }
  if (config_.use_tfidf_embeddings && (tfidf_ == nullptr || buckets_ == nullptr)) {
    throw experiment_error("bucket embeddings need a TF-IDF model and bucket boundaries");
  }
  if (config_.use_tfidf_embeddings && buckets_->num_buckets() != config_.buckets) {
    throw experiment_error("bucket model has " + std::to_string(buckets_->num_buckets()) + " buckets, config expects " +
                           std::to_string(config_.buckets));
  }
}

std::vector<std::int32_t> InputBuilder::bucket_ids(std::span<const TokenId> tokens,
                                                   const std::unordered_map<TokenId, double>& scores) const {
  if (!config_.use_tfidf_embeddings) return {};
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t == kCls || t == kSep) {
      out.push_back(-1);
    } else {
      out.push_back(static_cast<std::int32_t>(bucket_of(*buckets_, scores.at(t))));
    }
  }
  return out;
}

SequenceInput InputBuilder::flat_sequence(const Document& doc) const {
  const auto flat = doc.flat_tokens();
  const std::size_t budget = config_.max_positions - 1;
  SequenceInput in;
  in.tokens.push_back(kCls);
  if (config_.bow_transform == BowTransform::dedup_sort) {
    const auto sorted = dedup_sort(*tfidf_, flat, budget);
    in.tokens.insert(in.tokens.end(), sorted.begin(), sorted.end());
  } else {
    const auto body =
        config_.attention.global_mode == GlobalMode::cls_and_paragraph_sep ? tokens_with_separators(doc) : flat;
    const auto keep = static_cast<std::ptrdiff_t>(std::min(budget, body.size()));
    in.tokens.insert(in.tokens.end(), body.begin(), body.begin() + keep);
  }
  if (config_.use_tfidf_embeddings) in.buckets = bucket_ids(in.tokens, unigram_scores(*tfidf_, flat));
  return in;
}

ModelInput InputBuilder::build(const Document& doc) const {
  ModelInput input;
  if (config_.variant != Variant::hierarchical) {
    input.segments.push_back(flat_sequence(doc));
    return input;
  }
  std::unordered_map<TokenId, double> scores;
  if (config_.use_tfidf_embeddings) scores = unigram_scores(*tfidf_, doc.flat_tokens());
  for (auto& seg : segment_paragraphs(doc, config_.max_segments, config_.segment_len)) {
    SequenceInput s;
    s.buckets = bucket_ids(seg, scores);
    s.tokens = std::move(seg);
    input.segments.push_back(std::move(s));
  }
  return input;
}

std::vector<Example> InputBuilder::examples(std::span<const Document> docs) const {
  std::vector<Example> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(Example{build(d), d.labels});
  return out;
}

std::vector<LabelSet> predict_all(const Checkpoint& ckpt, std::span<const Document> docs) {
  std::vector<LabelSet> out;
  out.reserve(docs.size());
  if (ckpt.linear) {
    if (!ckpt.tfidf) throw experiment_error("linear checkpoint lacks its TF-IDF model");
    for (const auto& d : docs) out.push_back(predict_linear(*ckpt.linear, linear_features(*ckpt.tfidf, d)));
    return out;
  }
  if (!ckpt.encoder) throw experiment_error("checkpoint holds no model");
  const InputBuilder builder(ckpt.encoder->config, ckpt.tfidf ? &*ckpt.tfidf : nullptr,
                             ckpt.buckets ? &*ckpt.buckets : nullptr);
  for (const auto& d : docs) out.push_back(predict(*ckpt.encoder, builder.build(d)));
  return out;
}

F1Scores evaluate_checkpoint(const Checkpoint& ckpt, std::span<const Document> docs) {
  const auto pred = predict_all(ckpt, docs);
  const auto gold = gold_labels(docs);
  return f1_scores(gold, pred, ckpt.task.num_labels());
}

ExperimentResult run_experiment(const Splits& splits, const ExperimentConfig& config,
                                const std::optional<Checkpoint>& init) {
  splits.task.validate();
  if (splits.train.empty() || splits.dev.empty()) throw experiment_error("train and dev splits must be non-empty");
  const VariantPreset& preset = find_preset(config.variant);

  ExperimentResult result;
  Checkpoint& ckpt = result.checkpoint;
  EvalReport& report = result.report;
  ckpt.variant = preset.name;
  ckpt.task = splits.task;
  report.model = preset.name;
  report.task = splits.name;
  report.settings = config.settings();

  if (init) {
    if (init->task.labels != splits.task.labels) throw experiment_error("init checkpoint was trained on other labels");
    ckpt.vocab = init->vocab;
  } else {
    const auto texts = corpus_texts(splits.train);
    ckpt.vocab = build_vocab(texts, config.min_count, config.vocab_max_size);
  }
  const auto train = to_documents(splits.train, ckpt.vocab, splits.task);
  const auto dev = to_documents(splits.dev, ckpt.vocab, splits.task);
  const auto test = to_documents(splits.test, ckpt.vocab, splits.task);

  if (preset.linear) {
    std::size_t top_k = config.top_k;
    if (config.search_top_k) {
      const auto grid = grid_search(config.train.top_k_grid, [&](std::size_t k) {
        const auto fit = fit_linear(train, splits.task, config, k);
        Checkpoint probe{ckpt.variant, ckpt.task, ckpt.vocab, fit.tfidf, std::nullopt, fit.model, std::nullopt};
        EvalReport r;
        r.splits["dev"] = evaluate_checkpoint(probe, dev);
        return r;
      });
      top_k = grid.best_value;
      report.settings["top_k"] = std::to_string(top_k);
    }
    auto fit = fit_linear(train, splits.task, config, top_k);
    ckpt.tfidf = std::move(fit.tfidf);
    ckpt.linear = std::move(fit.model);
    report.seed = config.seed;
    report.parameter_count = ckpt.linear->weights.size() + ckpt.linear->bias.size();
    add_scores(report, ckpt, dev, test);
    report.validate();
    return result;
  }

  // Encoder variants.
  std::optional<Model> start;
  EncoderConfig enc;
  if (preset.warm_start) {
    if (!init || !init->encoder) throw experiment_error("variant '" + preset.name + "' needs --init with a trained checkpoint");
    const auto& src = *init->encoder;
    if (src.config.variant != Variant::flat_dense) throw experiment_error("warm start expects a flat_dense checkpoint");
    ExtensionPlan plan;
    plan.source_positions = src.config.max_positions;
    plan.target_positions = config.max_len.value_or(preset.max_len);
    plan.window = config.window.value_or(preset.window);
    plan.global_mode = config.global_mode.value_or(preset.global_mode);
    plan.to_sparse = true;
    plan.separate_global_projection = true;
    start = extend_model(src, plan);
    enc = start->config;
  } else if (init) {
    if (!init->encoder) throw experiment_error("init checkpoint holds no encoder");
    start = *init->encoder;
    enc = start->config;
  } else {
    enc = config.encoder_config(preset, ckpt.vocab.size(), splits.task);
  }
  if (init) {
    ckpt.tfidf = init->tfidf;
    ckpt.buckets = init->buckets;
  }
  const bool needs_tfidf = enc.bow_transform == BowTransform::dedup_sort || enc.use_tfidf_embeddings;
  const auto streams = flat_streams(train);
  if (needs_tfidf && !ckpt.tfidf) ckpt.tfidf = fit_tfidf(streams, TfidfOptions{1, 0, false});

  TrainConfig tc = config.train;
  tc.seeds = config.seed_list();

  auto train_with = [&](const EncoderConfig& cfg, const std::optional<BucketModel>& buckets, const TrainConfig& t) {
    const InputBuilder builder(cfg, ckpt.tfidf ? &*ckpt.tfidf : nullptr, buckets ? &*buckets : nullptr);
    const auto train_ex = builder.examples(train);
    const auto dev_ex = builder.examples(dev);
    auto make = [&](std::uint64_t seed) { return start ? *start : Model{cfg, init_state(cfg, seed)}; };
    return train_multi_seed(make, train_ex, dev_ex, t);
  };

  if (enc.use_tfidf_embeddings && !ckpt.buckets) {
    std::size_t b = enc.buckets;
    if (config.search_buckets && !start) {
      TrainConfig probe = tc;
      probe.seeds = {tc.seeds.front()};
      const auto grid = grid_search(tc.bucket_grid, [&](std::size_t value) {
        EncoderConfig cfg = enc;
        cfg.buckets = value;
        const auto run = train_with(cfg, fit_buckets(*ckpt.tfidf, streams, value), probe);
        EvalReport r;
        r.splits["dev"] = F1Scores{run.dev_history[run.best_epoch - 1], 0.0};
        return r;
      });
      b = grid.best_value;
      report.settings["buckets"] = std::to_string(b);
    }
    enc.buckets = b;
    ckpt.buckets = fit_buckets(*ckpt.tfidf, streams, b);
  }

  TrainResult run = train_with(enc, ckpt.buckets, tc);
  ckpt.encoder = std::move(run.best);
  report.seed = run.seed;
  report.dev_history = run.dev_history;
  report.chosen_epoch = run.best_epoch;
  report.epochs_run = run.epochs_run;
  report.parameter_count = ckpt.encoder->state.parameter_count();
  add_scores(report, ckpt, dev, test);

  const InputBuilder builder(enc, ckpt.tfidf ? &*ckpt.tfidf : nullptr, ckpt.buckets ? &*ckpt.buckets : nullptr);
  std::size_t peak = 0;
  for (const auto& d : dev) peak = std::max(peak, activation_bytes(*ckpt.encoder, builder.build(d)));
  report.activation_bytes_per_sample = peak;
  report.validate();
  return result;
}

}  // namespace longdoc
