#include "longdoc/cli.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "longdoc/error.hpp"
#include "longdoc/experiment.hpp"
#include "longdoc/kernels.hpp"
#include "longdoc/serialization.hpp"
#include "longdoc/warm_start.hpp"

namespace longdoc::cli {
namespace {

Error cli_error(const std::string& msg) { return Error("cli", msg); }

// Listed in --help; the file itself is expanded by expand_config before parsing.
void add_config(CLI::App& app) {
  app.add_option("--config", "Read option values from a key=value file (keys are long option names)");
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Replaces `--config FILE` by the file's key=value pairs as --key=value
// arguments, so unknown keys fail exactly like unknown flags. Options also
// given on the command line keep their command-line value.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::string file;
  std::size_t at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw cli_error("--config needs a file name");
      file = args[++i];
      at = out.size();
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      at = out.size();
    } else {
      out.push_back(args[i]);
    }
  }
  if (file.empty()) return out;
  std::ifstream in(file);
  if (!in) throw cli_error("cannot open config file " + file);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw cli_error(file + ": " + e.what());
  }
  std::vector<std::string> expanded;
  for (const auto& item : items) {
    if (!item.parents.empty()) throw cli_error(file + ": sections are not supported ('" + item.fullname() + "')");
    if (item.name == "config") throw cli_error(file + ": nested config files are not supported");
    const std::string flag = "--" + item.name;
    if (given(out, flag)) continue;
    if (item.inputs.empty()) expanded.push_back(flag);
    for (const auto& v : item.inputs) expanded.push_back(flag + "=" + v);
  }
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), expanded.begin(), expanded.end());
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string percent(double v) { return fixed(100.0 * v, 1); }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SyntheticOptions opts;
  double dev_frac = 0.1;
  double test_frac = 0.1;
};

void cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  if (a.dev_frac < 0 || a.test_frac < 0 || a.dev_frac + a.test_frac >= 1.0) {
    throw cli_error("dev and test fractions must be >= 0 and sum below 1");
  }
  const auto corpus = generate_synthetic(a.opts);
  const std::size_t n = corpus.docs.size();
  const auto n_dev = static_cast<std::size_t>(std::llround(a.dev_frac * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(a.test_frac * static_cast<double>(n)));
  const std::size_t n_train = n - n_dev - n_test;
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  std::span<const Document> docs(corpus.docs);
  write_jsonl(dir / "train.jsonl", docs.subspan(0, n_train), corpus.vocab, corpus.task);
  write_jsonl(dir / "dev.jsonl", docs.subspan(n_train, n_dev), corpus.vocab, corpus.task);
  write_jsonl(dir / "test.jsonl", docs.subspan(n_train + n_dev), corpus.vocab, corpus.task);
  write_task(dir / "task.json", corpus.task);
  err << "synth: wrote " << n << " documents to " << dir.string() << "\n";
  out << "train " << n_train << "\ndev " << n_dev << "\ntest " << n_test << "\n";
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string data;
  std::string out;
  std::size_t min_count = 1;
  std::size_t vocab_max = 0;
  std::size_t n_max = 3;
  std::size_t top_k = 20000;
  bool sublinear = false;
  std::size_t buckets = 0;
  std::size_t preview = 0;
  std::size_t preview_len = 20;
};

void cmd_featurize(const FeaturizeArgs& a, std::ostream& out, std::ostream& err) {
  const Splits splits = load_splits(a.data);
  const auto texts = corpus_texts(splits.train);
  const Vocabulary vocab = build_vocab(texts, a.min_count, a.vocab_max);
  std::vector<Document> train;
  std::vector<std::vector<TokenId>> streams;
  for (const auto& r : splits.train) {
    train.push_back(to_document(r, vocab, splits.task));
    auto s = train.back().flat_tokens();
    if (!s.empty()) streams.push_back(std::move(s));
  }
  const TfidfModel model = fit_tfidf(streams, TfidfOptions{a.n_max, a.top_k, a.sublinear});
  std::optional<BucketModel> buckets;
  if (a.buckets > 0) {
    const TfidfModel unigram = fit_tfidf(streams, TfidfOptions{1, 0, a.sublinear});
    buckets = fit_buckets(unigram, streams, a.buckets);
  }
  if (!a.out.empty()) {
    save_tfidf(a.out, model, buckets, &vocab);
    err << "featurize: wrote " << a.out << "\n";
  }
  out << "documents " << model.num_docs() << "\nfeatures " << model.num_features() << "\nn_max " << model.n_max()
      << "\n";
  if (buckets) {
    out << "bucket boundaries";
    for (double b : buckets->boundaries()) out << " " << fixed(b, 6);
    out << "\n";
  }
  for (std::size_t i = 0; i < std::min(a.preview, train.size()); ++i) {
    const auto tokens = train[i].flat_tokens();
    const auto sorted = dedup_sort(model, tokens, a.preview_len);
    out << train[i].id << " (" << tokens.size() << " tokens):";
    for (TokenId t : sorted) out << " " << vocab.token(t);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string checkpoint;
  std::string report;
  std::string init;
  ExperimentConfig cfg;
  std::size_t max_len = 0;
  std::size_t window = 0;
  bool window_set = false;
  std::string global_mode;
  std::string pooling = "max";
};

void print_report(const EvalReport& r, std::ostream& out) {
  out << std::left << std::setw(8) << "split" << std::right << std::setw(10) << "micro-F1" << std::setw(10)
      << "macro-F1" << "\n";
  for (const auto& [name, s] : r.splits) {
    out << std::left << std::setw(8) << name << std::right << std::setw(10) << percent(s.micro) << std::setw(10)
        << percent(s.macro) << "\n";
  }
  if (r.chosen_epoch > 0) out << "best epoch " << r.chosen_epoch << " of " << r.epochs_run << ", seed " << r.seed << "\n";
  out << "parameters " << r.parameter_count << "\n";
  if (r.seconds_per_sample) out << "seconds/sample " << *r.seconds_per_sample << "\n";
  if (r.activation_bytes_per_sample) out << "activation bytes/sample " << *r.activation_bytes_per_sample << "\n";
}

void cmd_train(TrainArgs a, std::ostream& out, std::ostream& err) {
  if (a.max_len > 0) a.cfg.max_len = a.max_len;
  if (a.window_set) a.cfg.window = a.window;
  if (!a.global_mode.empty()) a.cfg.global_mode = parse_global_mode(a.global_mode);
  a.cfg.pooling = parse_pooling(a.pooling);
  a.cfg.train.validate();
  const VariantPreset& preset = find_preset(a.cfg.variant);
  a.cfg.variant = preset.name;

  const Splits splits = load_splits(a.data);
  std::optional<Checkpoint> init;
  if (!a.init.empty()) init = load_checkpoint(a.init);
  err << "train: " << preset.name << " on " << splits.name << " (" << splits.train.size() << " train, "
      << splits.dev.size() << " dev, " << splits.test.size() << " test)\n";
  const ExperimentResult result = run_experiment(splits, a.cfg, init);
  if (!a.checkpoint.empty()) {
    save_checkpoint(a.checkpoint, result.checkpoint);
    err << "train: wrote " << a.checkpoint << "\n";
  }
  if (!a.report.empty()) {
    write_report(a.report, result.report);
    err << "train: wrote " << a.report << "\n";
  }
  print_report(result.report, out);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> splits{"dev", "test"};
  std::string report;
  std::size_t time_repeats = 0;
};

void cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Splits splits = load_splits(a.data);
  if (splits.task.labels != ckpt.task.labels) throw cli_error("dataset labels differ from the checkpoint's labels");
  EvalReport report;
  report.model = ckpt.variant;
  report.task = splits.name;
  std::vector<Document> timed;
  for (const auto& name : a.splits) {
    const std::vector<RawDocument>* raw = name == "train" ? &splits.train
                                          : name == "dev" ? &splits.dev
                                          : name == "test" ? &splits.test
                                                           : nullptr;
    if (raw == nullptr) throw cli_error("unknown split '" + name + "'");
    if (raw->empty()) continue;
    std::vector<Document> docs;
    for (const auto& r : *raw) docs.push_back(to_document(r, ckpt.vocab, ckpt.task));
    report.splits[name] = evaluate_checkpoint(ckpt, docs);
    if (timed.empty()) timed = docs;
  }
  if (ckpt.encoder) report.parameter_count = ckpt.encoder->state.parameter_count();
  if (ckpt.linear) report.parameter_count = ckpt.linear->weights.size() + ckpt.linear->bias.size();
  if (a.time_repeats > 0 && !timed.empty()) {
    report.seconds_per_sample = median_seconds_per_sample(
        [&] { (void)predict_all(ckpt, timed); }, timed.size(), a.time_repeats);
    if (ckpt.encoder) {
      const InputBuilder builder(ckpt.encoder->config, ckpt.tfidf ? &*ckpt.tfidf : nullptr,
                                 ckpt.buckets ? &*ckpt.buckets : nullptr);
      std::size_t peak = 0;
      for (const auto& d : timed) peak = std::max(peak, activation_bytes(*ckpt.encoder, builder.build(d)));
      report.activation_bytes_per_sample = peak;
    }
  }
  report.validate();
  if (!a.report.empty()) {
    write_report(a.report, report);
    err << "eval: wrote " << a.report << "\n";
  }
  print_report(report, out);
}

// ---------------------------------------------------------------------------

struct ExtendArgs {
  std::string checkpoint;
  std::string out;
  std::size_t target = 4096;
  std::size_t window = 0;
  bool window_set = false;
  std::string global_mode;
  bool sparse = false;
  bool separate_global = false;
  std::string variant;
};

void cmd_extend(const ExtendArgs& a, std::ostream& out, std::ostream& err) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.encoder) throw cli_error("extend needs an encoder checkpoint");
  ExtensionPlan plan;
  plan.source_positions = ckpt.encoder->config.max_positions;
  plan.target_positions = a.target;
  if (a.window_set) plan.window = a.window;
  if (!a.global_mode.empty()) plan.global_mode = parse_global_mode(a.global_mode);
  plan.to_sparse = a.sparse;
  plan.separate_global_projection = a.separate_global;
  ckpt.encoder = extend_model(*ckpt.encoder, plan);
  if (!a.variant.empty()) ckpt.variant = find_preset(a.variant).name;
  save_checkpoint(a.out, ckpt);
  const auto& c = ckpt.encoder->config;
  err << "extend: wrote " << a.out << "\n";
  out << "positions " << plan.source_positions << " -> " << c.max_positions << " (clone factor "
      << plan.clone_factor() << ")\nvariant " << to_string(c.variant) << "\nwindow " << c.attention.window
      << "\nglobal mode " << to_string(c.attention.global_mode) << "\nseparate global projection "
      << (c.attention.separate_global_projection ? "yes" : "no") << "\nparameters " << ckpt.encoder->state.parameter_count()
      << "\n";
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string data;
  std::vector<std::string> splits{"train", "dev", "test"};
  bool dedup = false;
};

void cmd_stats(const StatsArgs& a, std::ostream& out, std::ostream&) {
  const Splits splits = load_splits(a.data);
  std::vector<RawDocument> all;
  for (const auto* s : {&splits.train, &splits.dev, &splits.test}) all.insert(all.end(), s->begin(), s->end());
  const auto texts = corpus_texts(all);
  const Vocabulary vocab = build_vocab(texts, 1);
  out << std::left << std::setw(8) << "split" << std::right << std::setw(7) << "docs" << std::setw(22) << "mean length"
      << std::setw(18) << "max length";
  if (a.dedup) out << std::setw(16) << "unique < orig";
  out << "\n";
  for (const auto& name : a.splits) {
    const std::vector<RawDocument>* raw = name == "train" ? &splits.train
                                          : name == "dev" ? &splits.dev
                                          : name == "test" ? &splits.test
                                                           : nullptr;
    if (raw == nullptr) throw cli_error("unknown split '" + name + "'");
    if (raw->empty()) continue;
    std::vector<Document> docs;
    for (const auto& r : *raw) docs.push_back(to_document(r, vocab, splits.task));
    const LengthStats orig = length_stats(docs, false);
    std::string mean = fixed(orig.mean, 1);
    std::string max = std::to_string(orig.max);
    std::string shorter;
    if (a.dedup) {
      const LengthStats uniq = length_stats(docs, true);
      mean += " (" + fixed(uniq.mean, 1) + ")";
      max += " (" + std::to_string(uniq.max) + ")";
      std::size_t below = 0;
      for (std::size_t i = 0; i < docs.size(); ++i) below += uniq.lengths[i] < orig.lengths[i] ? 1 : 0;
      shorter = percent(static_cast<double>(below) / static_cast<double>(docs.size())) + "%";
    }
    out << std::left << std::setw(8) << name << std::right << std::setw(7) << docs.size() << std::setw(22) << mean
        << std::setw(18) << max;
    if (a.dedup) out << std::setw(16) << shorter;
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

struct BenchAttentionArgs {
  std::vector<std::size_t> lengths{512, 1024, 2048};
  std::size_t window = 64;
  std::size_t heads = 2;
  std::size_t head_dim = 32;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

void cmd_bench_attention(const BenchAttentionArgs& a, std::ostream& out, std::ostream& err) {
  AttentionConfig cfg;
  cfg.heads = a.heads;
  cfg.head_dim = a.head_dim;
  cfg.window = a.window;
  cfg.validate();
  err << "bench: kernels " << kernels::isa_name(kernels::active_isa()) << "\n";
  out << std::setw(8) << "n" << std::setw(14) << "dense s" << std::setw(14) << "sparse s" << std::setw(12)
      << "dense x" << std::setw(12) << "sparse x" << "\n";
  std::optional<AttentionTiming> prev;
  for (std::size_t n : a.lengths) {
    const AttentionTiming t = time_attention(n, cfg, a.repeats, a.seed);
    out << std::setw(8) << n << std::setw(14) << std::scientific << std::setprecision(3) << t.dense_seconds
        << std::setw(14) << t.sparse_seconds << std::defaultfloat;
    if (prev) {
      out << std::setw(12) << fixed(t.dense_seconds / prev->dense_seconds, 2) << std::setw(12)
          << fixed(t.sparse_seconds / prev->sparse_seconds, 2);
    }
    out << "\n";
    prev = t;
  }
}

struct BenchModelArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t limit = 0;
  std::size_t repeats = 3;
};

void cmd_bench_model(const BenchModelArgs& a, std::ostream& out, std::ostream&) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.encoder) throw cli_error("bench model needs an encoder checkpoint");
  const Splits splits = load_splits(a.data);
  const std::vector<RawDocument>* raw = a.split == "train" ? &splits.train
                                        : a.split == "dev" ? &splits.dev
                                        : a.split == "test" ? &splits.test
                                                            : nullptr;
  if (raw == nullptr) throw cli_error("unknown split '" + a.split + "'");
  const InputBuilder builder(ckpt.encoder->config, ckpt.tfidf ? &*ckpt.tfidf : nullptr,
                             ckpt.buckets ? &*ckpt.buckets : nullptr);
  std::vector<ModelInput> inputs;
  for (const auto& r : *raw) {
    if (a.limit > 0 && inputs.size() >= a.limit) break;
    inputs.push_back(builder.build(to_document(r, ckpt.vocab, ckpt.task)));
  }
  if (inputs.empty()) throw cli_error("no documents to benchmark");
  const BenchmarkResult b = benchmark(*ckpt.encoder, inputs, a.repeats);
  out << "model " << ckpt.variant << "\nsamples " << inputs.size() << "\nseconds/sample " << b.seconds_per_sample
      << "\nparameters " << b.parameter_count << "\nactivation bytes/sample " << b.activation_bytes_per_sample << "\n";
}

// ---------------------------------------------------------------------------

struct AggregateArgs {
  std::vector<std::string> reports;
  std::string split = "test";
  std::string csv;
};

void cmd_aggregate(const AggregateArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> tasks;
  std::vector<std::string> models;
  std::map<std::pair<std::string, std::string>, F1Scores> cell;
  for (const auto& path : a.reports) {
    const EvalReport r = read_report(path);
    const auto it = r.splits.find(a.split);
    if (it == r.splits.end()) throw cli_error(path + ": no '" + a.split + "' scores");
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (!cell.emplace(std::make_pair(r.model, r.task), it->second).second) {
      throw cli_error(path + ": duplicate report for " + r.model + " on " + r.task);
    }
  }

  std::vector<std::string> header{"model"};
  for (const auto& t : tasks) {
    header.push_back(t + " micro");
    header.push_back(t + " macro");
  }
  header.push_back("hmean micro");
  header.push_back("hmean macro");
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : models) {
    std::vector<std::string> row{m};
    std::vector<double> micro, macro;
    bool complete = true;
    for (const auto& t : tasks) {
      auto it = cell.find({m, t});
      if (it == cell.end()) {
        complete = false;
        row.insert(row.end(), {"", ""});
        continue;
      }
      micro.push_back(100.0 * it->second.micro);
      macro.push_back(100.0 * it->second.macro);
      row.push_back(fixed(micro.back(), 1));
      row.push_back(fixed(macro.back(), 1));
    }
    if (!complete) err << "aggregate: " << m << " lacks some tasks; harmonic mean left empty\n";
    row.push_back(complete ? fixed(harmonic_mean(micro), 1) : "");
    row.push_back(complete ? fixed(harmonic_mean(macro), 1) : "");
    rows.push_back(std::move(row));
  }

  if (!a.csv.empty()) {
    std::ostringstream csv;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
      csv << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    write_text_file(a.csv, csv.str());
    err << "aggregate: wrote " << a.csv << "\n";
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto print = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == 0) out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      else out << "  " << std::right << std::setw(static_cast<int>(width[c])) << cells[c];
    }
    out << "\n";
  };
  print(header);
  for (const auto& r : rows) print(r);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-document classification toolkit"};
  app.name(args.empty() ? "longdoc" : args[0]);
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "Kernel variant: scalar, avx2 or neon (default: best available)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic corpus with train/dev/test splits");
  add_config(*s);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--docs", synth.opts.n_docs, "Number of documents")->capture_default_str();
  s->add_option("--classes", synth.opts.n_classes, "Number of classes")->capture_default_str();
  s->add_option("--vocab", synth.opts.vocab_size, "Vocabulary size including reserved tokens")->capture_default_str();
  s->add_option("--mean-len", synth.opts.mean_len, "Mean document length in tokens")->capture_default_str();
  s->add_flag("--multi-label", synth.opts.multi_label, "Multi-label task with no-label documents");
  s->add_option("--seed", synth.opts.seed, "Random seed")->capture_default_str();
  s->add_option("--dev-frac", synth.dev_frac, "Fraction of documents in dev")->capture_default_str();
  s->add_option("--test-frac", synth.test_frac, "Fraction of documents in test")->capture_default_str();

  FeaturizeArgs feat;
  auto* f = app.add_subcommand("featurize", "Fit TF-IDF on the training split, optionally preview dedup-sort");
  add_config(*f);
  f->add_option("--data", feat.data, "Dataset directory")->required();
  f->add_option("--out", feat.out, "Write the fitted model to this JSON file");
  f->add_option("--min-count", feat.min_count, "Minimum token frequency")->capture_default_str();
  f->add_option("--vocab-max", feat.vocab_max, "Maximum vocabulary size (0 = unlimited)")->capture_default_str();
  f->add_option("--n-max", feat.n_max, "Longest n-gram")->capture_default_str();
  f->add_option("--top-k", feat.top_k, "Number of most frequent n-grams kept (0 = all)")->capture_default_str();
  f->add_flag("--sublinear", feat.sublinear, "Use 1 + ln(count) as TF");
  f->add_option("--buckets", feat.buckets, "Also fit this many score buckets")->capture_default_str();
  f->add_option("--preview", feat.preview, "Print dedup-sorted tokens of the first N training documents");
  f->add_option("--preview-len", feat.preview_len, "Tokens shown per preview")->capture_default_str();

  TrainArgs train;
  auto& tc = train.cfg;
  auto* t = app.add_subcommand("train", "Train a model variant and report dev/test F1");
  add_config(*t);
  t->add_option("--data", train.data, "Dataset directory")->required();
  std::string variants;
  for (const auto& p : variant_presets()) variants += (variants.empty() ? "" : ", ") + p.name;
  t->add_option("--variant", tc.variant, "Model variant: " + variants)->capture_default_str();
  t->add_option("--checkpoint", train.checkpoint, "Write the trained model here");
  t->add_option("--report", train.report, "Write the evaluation report here");
  t->add_option("--init", train.init, "Start from this checkpoint (required by legal-longformer variants)");
  t->add_option("--seed", tc.seed, "Base random seed")->capture_default_str();
  t->add_option("--num-seeds", tc.num_seeds, "Seeds tried; the best dev run is kept")->capture_default_str();
  t->add_option("--min-count", tc.min_count, "Minimum token frequency")->capture_default_str();
  t->add_option("--vocab-max", tc.vocab_max_size, "Maximum vocabulary size (0 = unlimited)")->capture_default_str();
  t->add_option("--n-max", tc.n_max, "Longest n-gram (tfidf-svm)")->capture_default_str();
  t->add_option("--top-k", tc.top_k, "TF-IDF features kept (tfidf-svm)")->capture_default_str();
  t->add_flag("--sublinear", tc.sublinear, "Sublinear TF (tfidf-svm)");
  t->add_flag("--search-top-k", tc.search_top_k, "Pick top-k from the grid on dev");
  t->add_option("--top-k-grid", tc.train.top_k_grid, "Grid for --search-top-k")->capture_default_str();
  t->add_option("--reg", tc.reg, "SVM regularization constant C")->capture_default_str();
  t->add_option("--svm-epochs", tc.svm_epochs, "SVM passes over the data")->capture_default_str();
  t->add_option("--dim", tc.dim, "Model dimension")->capture_default_str();
  t->add_option("--heads", tc.heads, "Attention heads")->capture_default_str();
  t->add_option("--layers", tc.layers, "Transformer blocks")->capture_default_str();
  t->add_option("--ff", tc.ff_dim, "Feedforward dimension")->capture_default_str();
  t->add_option("--max-len", train.max_len, "Maximum input length (default from the variant)");
  t->add_option("--window", train.window, "Total attention window width (even)")
      ->each([&](const std::string&) { train.window_set = true; });
  t->add_option("--global-mode", train.global_mode, "Global tokens: cls or par");
  t->add_flag("--separate-global", tc.separate_global_projection, "Separate projections for global tokens");
  t->add_option("--buckets", tc.buckets, "TF-IDF buckets (emb variants)")->capture_default_str();
  t->add_flag("--search-buckets", tc.search_buckets, "Pick the bucket count from the grid on dev");
  t->add_option("--bucket-grid", tc.train.bucket_grid, "Grid for --search-buckets")->capture_default_str();
  t->add_option("--segments", tc.max_segments, "Maximum segments (hierarchical)")->capture_default_str();
  t->add_option("--segment-len", tc.segment_len, "Tokens per segment including CLS")->capture_default_str();
  t->add_option("--segment-layers", tc.segment_layers, "Segment-level blocks")->capture_default_str();
  t->add_option("--pooling", train.pooling, "Segment pooling: first or max")->capture_default_str();
  t->add_option("--lr", tc.train.adam.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--epochs", tc.train.max_epochs, "Maximum epochs")->capture_default_str();
  t->add_option("--patience", tc.train.patience, "Early-stopping patience in epochs")->capture_default_str();
  t->add_option("--batch-size", tc.train.batch_size, "Minibatch size")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on dataset splits");
  add_config(*e);
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.splits, "Splits to score")->capture_default_str();
  e->add_option("--report", ev.report, "Write the evaluation report here");
  e->add_option("--time", ev.time_repeats, "Also time prediction with this many repeats (>= 3)");

  ExtendArgs ext;
  auto* x = app.add_subcommand("extend", "Extend a checkpoint to longer inputs by cloning positions");
  add_config(*x);
  x->add_option("--checkpoint", ext.checkpoint, "Source checkpoint")->required();
  x->add_option("--out", ext.out, "Output checkpoint")->required();
  x->add_option("--target-len", ext.target, "New maximum positions")->capture_default_str();
  x->add_option("--window", ext.window, "New total window width (even)")
      ->each([&](const std::string&) { ext.window_set = true; });
  x->add_option("--global-mode", ext.global_mode, "Global tokens: cls or par");
  x->add_flag("--sparse", ext.sparse, "Switch dense attention to sliding-window attention");
  x->add_flag("--separate-global", ext.separate_global, "Add global projections copied from the local ones");
  x->add_option("--variant", ext.variant, "Variant name recorded in the output checkpoint");

  StatsArgs st;
  auto* l = app.add_subcommand("stats", "Document length statistics");
  add_config(*l);
  l->add_option("--data", st.data, "Dataset directory")->required();
  l->add_option("--split", st.splits, "Splits to report")->capture_default_str();
  l->add_flag("--dedup", st.dedup, "Also report lengths after removing duplicate tokens");

  auto* b = app.add_subcommand("bench", "Timing benchmarks");
  b->require_subcommand(1);
  BenchAttentionArgs ba;
  auto* bat = b->add_subcommand("attention", "Dense vs sliding-window attention time as n grows");
  add_config(*bat);
  bat->add_option("--n", ba.lengths, "Sequence lengths")->capture_default_str();
  bat->add_option("--window", ba.window, "Total window width")->capture_default_str();
  bat->add_option("--heads", ba.heads, "Heads")->capture_default_str();
  bat->add_option("--head-dim", ba.head_dim, "Dimension per head")->capture_default_str();
  bat->add_option("--repeats", ba.repeats, "Timed repeats (median)")->capture_default_str();
  bat->add_option("--seed", ba.seed, "Random seed for inputs")->capture_default_str();
  BenchModelArgs bm;
  auto* bmo = b->add_subcommand("model", "Inference time, parameters and activation memory of a checkpoint");
  add_config(*bmo);
  bmo->add_option("--checkpoint", bm.checkpoint, "Checkpoint file")->required();
  bmo->add_option("--data", bm.data, "Dataset directory")->required();
  bmo->add_option("--split", bm.split, "Split to run")->capture_default_str();
  bmo->add_option("--limit", bm.limit, "Use at most this many documents (0 = all)")->capture_default_str();
  bmo->add_option("--repeats", bm.repeats, "Timed repeats (median)")->capture_default_str();

  AggregateArgs ag;
  auto* g = app.add_subcommand("aggregate", "Harmonic mean of report scores across tasks");
  add_config(*g);
  g->add_option("reports", ag.reports, "Report JSON files")->required();
  g->add_option("--split", ag.split, "Split whose scores are aggregated")->capture_default_str();
  g->add_option("--csv", ag.csv, "Also write the table as CSV");

  std::vector<std::string> reversed;
  try {
    const auto full = expand_config(args);
    reversed.assign(full.rbegin(), full.rend());
  } catch (const Error& ex) {
    err << app.get_name() << ": error: " << ex.what() << "\n";
    return 2;
  }
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& pe) {
    err << app.get_name() << ": error: " << pe.what() << "\n";
    return pe.get_exit_code() != 0 ? pe.get_exit_code() : 2;
  }

  try {
    if (!isa.empty()) {
      const std::map<std::string, kernels::Isa> names{
          {"scalar", kernels::Isa::scalar}, {"avx2", kernels::Isa::avx2}, {"neon", kernels::Isa::neon}};
      const auto it = names.find(isa);
      if (it == names.end()) throw cli_error("unknown kernel variant '" + isa + "'");
      kernels::set_isa(it->second);
    }
    if (s->parsed()) cmd_synth(synth, out, err);
    else if (f->parsed()) cmd_featurize(feat, out, err);
    else if (t->parsed()) cmd_train(train, out, err);
    else if (e->parsed()) cmd_eval(ev, out, err);
    else if (x->parsed()) cmd_extend(ext, out, err);
    else if (l->parsed()) cmd_stats(st, out, err);
    else if (bat->parsed()) cmd_bench_attention(ba, out, err);
    else if (bmo->parsed()) cmd_bench_model(bm, out, err);
    else if (g->parsed()) cmd_aggregate(ag, out, err);
    return 0;
  } catch (const Error& ex) {
    err << app.get_name() << ": error: " << ex.what() << "\n";
  } catch (const std::exception& ex) {
    err << app.get_name() << ": error: " << ex.what() << "\n";
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace longdoc::cli
