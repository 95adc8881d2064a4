#include <doctest.h>

#include <sstream>

#include "longdoc/cli.hpp"
#include "longdoc/error.hpp"
#include "longdoc/experiment.hpp"
#include "longdoc/serialization.hpp"
#include "support.hpp"

using namespace longdoc;

namespace {

std::filesystem::path synth_data(const std::string& name, bool multi = false) {
  const auto dir = testing::temp_dir(name);
  std::vector<std::string> args{"longdoc", "synth", "--out", dir.string(), "--docs", "60", "--vocab", "300",
                                "--mean-len", "60", "--seed", "3"};
  if (multi) args.push_back("--multi-label");
  std::ostringstream out, err;
  REQUIRE(cli::run(args, out, err) == 0);
  return dir;
}

ExperimentConfig tiny(const std::string& variant) {
  ExperimentConfig c;
  c.variant = variant;
  c.num_seeds = 1;
  c.dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.ff_dim = 8;
  c.max_len = 32;
  c.window = 8;
  c.buckets = 4;
  c.max_segments = 3;
  c.segment_len = 16;
  c.segment_layers = 1;
  c.train.max_epochs = 2;
  c.train.adam.learning_rate = 1e-3;
  return c;
}

std::vector<Document> docs_of(const Splits& s, const Checkpoint& ck, const std::vector<RawDocument>& raw) {
  std::vector<Document> out;
  for (const auto& r : raw) out.push_back(to_document(r, ck.vocab, s.task));
  return out;
}

}  // namespace

TEST_CASE("variant presets") {
  CHECK(find_preset("LegalBERT").name == "legalbert");
  CHECK(find_preset("svm").linear);
  CHECK(find_preset("hierarchical").variant == Variant::hierarchical);
  const auto& par = find_preset("longformer-8192-par");
  CHECK(par.max_len == 8192);
  CHECK(par.window == 128);
  CHECK(par.global_mode == GlobalMode::cls_and_paragraph_sep);
  CHECK(find_preset("longformer").window == 512);
  CHECK(find_preset("legal-longformer").warm_start);
  CHECK(find_preset("tfidf-srt-emb-legalbert").tfidf_embeddings);
  CHECK(find_preset("tfidf-srt-legalbert").bow_transform == BowTransform::dedup_sort);
  CHECK_THROWS_WITH_AS(find_preset("gpt"), "experiment: unknown variant 'gpt'", Error);

  ExperimentConfig c;
  c.seed = 10;
  c.num_seeds = 3;
  CHECK(c.seed_list() == std::vector<std::uint64_t>{10, 11, 12});
  TaskSpec task;
  task.labels = {"a", "b"};
  auto enc = c.encoder_config(find_preset("longformer-8192"), 50, task);
  CHECK(enc.max_positions == 8192);
  CHECK(enc.attention.window == 128);
  CHECK(enc.variant == Variant::flat_sparse);
  CHECK(enc.num_labels == 2);
  CHECK_THROWS_AS(c.encoder_config(find_preset("tfidf-svm"), 50, task), Error);
  c.dim = 33;
  CHECK_THROWS_AS(c.encoder_config(find_preset("legalbert"), 50, task), Error);
}

TEST_CASE("input builder layouts") {
  Vocabulary vocab({"a", "b", "c", "d", "e"});
  Document doc;
  doc.paragraphs = {{4, 5, 4}, {6, 7}, {8}};
  doc.labels = {0};

  EncoderConfig c = testing::toy_config(Variant::flat_dense);
  c.max_positions = 6;
  c.attention.global_mode = GlobalMode::cls_only;
  InputBuilder flat(c, nullptr, nullptr);
  CHECK(flat.build(doc).segments.at(0).tokens == std::vector<TokenId>{kCls, 4, 5, 4, 6, 7});

  c.attention.global_mode = GlobalMode::cls_and_paragraph_sep;
  InputBuilder par(c, nullptr, nullptr);
  CHECK(par.build(doc).segments.at(0).tokens == std::vector<TokenId>{kCls, 4, 5, 4, kSep, 6});
  CHECK(tokens_with_separators(doc) == std::vector<TokenId>{4, 5, 4, kSep, 6, 7, kSep, 8, kSep});

  auto h = testing::toy_config(Variant::hierarchical);
  h.segment_len = 4;
  InputBuilder hier(h, nullptr, nullptr);
  const auto in = hier.build(doc);
  REQUIRE(in.segments.size() == 3);
  CHECK(in.segments[0].tokens == std::vector<TokenId>{kCls, 4, 5, 4});
  CHECK(in.segments[2].tokens == std::vector<TokenId>{kCls, 8});

  c.bow_transform = BowTransform::dedup_sort;
  CHECK_THROWS_AS(InputBuilder(c, nullptr, nullptr), Error);
}

TEST_CASE("dedup-sorted inputs ignore word order") {
  Rng rng(4);
  std::vector<std::vector<TokenId>> corpus;
  for (int d = 0; d < 20; ++d) {
    std::vector<TokenId> doc;
    for (int i = 0; i < 30; ++i) doc.push_back(static_cast<TokenId>(4 + rng.index(8)));
    corpus.push_back(doc);
  }
  const auto tfidf = fit_tfidf(corpus, TfidfOptions{1, 0, false});
  const auto buckets = fit_buckets(tfidf, corpus, 3);
  auto c = testing::toy_config(Variant::flat_dense, true);
  c.bow_transform = BowTransform::dedup_sort;
  c.max_positions = 6;
  InputBuilder builder(c, &tfidf, &buckets);
  for (const auto& tokens : corpus) {
    Document a;
    a.paragraphs = {tokens};
    Document b;
    auto shuffled = tokens;
    rng.shuffle(shuffled);
    b.paragraphs = {std::vector<TokenId>(shuffled.begin(), shuffled.begin() + 10),
                    std::vector<TokenId>(shuffled.begin() + 10, shuffled.end())};
    const auto x = builder.build(a).segments[0];
    const auto y = builder.build(b).segments[0];
    CHECK(x.tokens == y.tokens);
    CHECK(x.buckets == y.buckets);
    CHECK(x.tokens.front() == kCls);
    CHECK(x.buckets.front() == -1);
    CHECK(x.tokens.size() <= c.max_positions);
  }
}

TEST_CASE("task and report files round trip") {
  const auto dir = testing::temp_dir("report_rt");
  TaskSpec t;
  t.kind = TaskKind::multi_label;
  t.labels = {"x", "y", "z"};
  t.max_input_length = 4096;
  write_task(dir / "task.json", t);
  const auto back = read_task(dir / "task.json");
  CHECK(back.kind == t.kind);
  CHECK(back.labels == t.labels);
  CHECK(back.max_input_length == 4096);

  EvalReport r;
  r.model = "legalbert";
  r.task = "toy";
  r.seed = 7;
  r.splits["dev"] = {0.1 + 0.2, 1.0 / 3.0};
  r.dev_history = {0.25, 0.5};
  r.chosen_epoch = 2;
  r.epochs_run = 2;
  r.parameter_count = 1234;
  r.seconds_per_sample = 1e-3 / 7.0;
  r.settings["lr"] = "0.001";
  write_report(dir / "r.json", r);
  CHECK(read_report(dir / "r.json") == r);
  CHECK(report_from_json(report_to_json(r)) == r);
}

TEST_CASE("malformed files are rejected") {
  const auto dir = testing::temp_dir("bad_files");
  write_text_file(dir / "a.json", "{not json");
  CHECK_THROWS_AS(read_report(dir / "a.json"), Error);
  write_text_file(dir / "b.json", R"({"format": "longdoc.report", "version": 99})");
  CHECK_THROWS_WITH_AS(read_report(dir / "b.json"), doctest::Contains("version 99 is not supported"), Error);
  write_text_file(dir / "c.json", R"({"format": "longdoc.task", "version": 1, "kind": "single_label", "labels": []})");
  CHECK_THROWS_AS(load_checkpoint(dir / "c.json"), Error);
  CHECK_THROWS_AS(read_task(dir / "c.json"), Error);
  CHECK_THROWS_AS(read_report(dir / "missing.json"), Error);
}

TEST_CASE("linear experiment and checkpoint round trip") {
  const auto data = synth_data("exp_linear");
  const auto splits = load_splits(data);
  auto cfg = tiny("tfidf-svm");
  cfg.top_k = 500;
  const auto result = run_experiment(splits, cfg);
  CHECK(result.report.model == "tfidf-svm");
  CHECK(result.report.splits.count("dev") == 1);
  CHECK(result.report.splits.count("test") == 1);
  REQUIRE(result.checkpoint.linear);
  CHECK(result.checkpoint.tfidf->num_features() <= 500);

  const auto dir = testing::temp_dir("ckpt_linear");
  save_checkpoint(dir / "m.json", result.checkpoint);
  const auto back = load_checkpoint(dir / "m.json");
  const auto docs = docs_of(splits, back, splits.test);
  CHECK(predict_all(back, docs) == predict_all(result.checkpoint, docs));
  CHECK(evaluate_checkpoint(back, docs_of(splits, back, splits.dev)) == result.report.splits.at("dev"));
  CHECK(back.linear->weights == result.checkpoint.linear->weights);
}

TEST_CASE("encoder experiments and checkpoint round trip") {
  const auto data = synth_data("exp_encoder");
  const auto splits = load_splits(data);
  for (const char* variant : {"legalbert", "tfidf-srt-emb-legalbert", "hier-legalbert", "longformer-8192-par"}) {
    CAPTURE(variant);
    const auto cfg = tiny(variant);
    const auto result = run_experiment(splits, cfg);
    REQUIRE(result.checkpoint.encoder);
    const auto& r = result.report;
    CHECK(r.dev_history.size() == r.epochs_run);
    CHECK(r.chosen_epoch >= 1);
    CHECK(r.parameter_count == result.checkpoint.encoder->state.parameter_count());
    CHECK(r.activation_bytes_per_sample.value_or(0) > 0);
    CHECK(r.splits.at("dev").micro == r.dev_history[r.chosen_epoch - 1]);

    const auto dir = testing::temp_dir("ckpt_encoder");
    save_checkpoint(dir / "m.json", result.checkpoint);
    const auto back = load_checkpoint(dir / "m.json");
    CHECK(back.encoder->state.classifier_weights == result.checkpoint.encoder->state.classifier_weights);
    const auto docs = docs_of(splits, back, splits.test);
    const InputBuilder a(result.checkpoint.encoder->config,
                         result.checkpoint.tfidf ? &*result.checkpoint.tfidf : nullptr,
                         result.checkpoint.buckets ? &*result.checkpoint.buckets : nullptr);
    const InputBuilder b(back.encoder->config, back.tfidf ? &*back.tfidf : nullptr,
                         back.buckets ? &*back.buckets : nullptr);
    for (const auto& d : docs) CHECK(logits(*back.encoder, b.build(d)) == logits(*result.checkpoint.encoder, a.build(d)));

    // same configuration and seed give the same run
    CHECK(run_experiment(splits, cfg).report.dev_history == r.dev_history);
  }
}

TEST_CASE("warm-started variant needs a source checkpoint") {
  const auto data = synth_data("exp_warm");
  const auto splits = load_splits(data);
  auto base = tiny("legalbert");
  base.train.max_epochs = 1;
  const auto src = run_experiment(splits, base);

  auto cfg = tiny("legal-longformer-8192-par");
  cfg.max_len = 128;
  cfg.window = 8;
  CHECK_THROWS_WITH_AS(run_experiment(splits, cfg), doctest::Contains("needs --init"), Error);
  const auto warm = run_experiment(splits, cfg, src.checkpoint);
  const auto& enc = warm.checkpoint.encoder->config;
  CHECK(enc.max_positions == 128);
  CHECK(enc.variant == Variant::flat_sparse);
  CHECK(enc.attention.separate_global_projection);
  CHECK(enc.attention.global_mode == GlobalMode::cls_and_paragraph_sep);
  CHECK(warm.checkpoint.vocab.size() == src.checkpoint.vocab.size());
}

TEST_CASE("bucket search picks a grid value") {
  const auto data = synth_data("exp_grid");
  const auto splits = load_splits(data);
  auto cfg = tiny("tfidf-emb-legalbert");
  cfg.search_buckets = true;
  cfg.train.max_epochs = 1;
  cfg.train.bucket_grid = {2, 4};
  const auto r = run_experiment(splits, cfg);
  const auto chosen = r.report.settings.at("buckets");
  CHECK((chosen == "2" || chosen == "4"));
  CHECK(std::to_string(r.checkpoint.buckets->num_buckets()) == chosen);
  CHECK(std::to_string(r.checkpoint.encoder->config.buckets) == chosen);
}

TEST_CASE("multi-label experiment") {
  const auto data = synth_data("exp_multi", true);
  const auto splits = load_splits(data);
  CHECK(splits.task.kind == TaskKind::multi_label);
  auto cfg = tiny("tfidf-svm");
  const auto r = run_experiment(splits, cfg);
  CHECK(r.report.splits.at("test").micro >= 0.0);
  auto enc = tiny("legalbert");
  enc.train.max_epochs = 1;
  CHECK_NOTHROW(run_experiment(splits, enc));
}
