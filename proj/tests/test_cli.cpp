#include <doctest.h>

#include <fstream>
#include <sstream>

#include "longdoc/cli.hpp"
#include "longdoc/serialization.hpp"
#include "support.hpp"

using namespace longdoc;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "longdoc");
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string make_data(const std::filesystem::path& root, const std::string& name) {
  const auto dir = (root / name).string();
  REQUIRE(run({"synth", "--out", dir, "--docs", "60", "--vocab", "300", "--mean-len", "60", "--seed", "5"}).code == 0);
  return dir;
}

const std::vector<std::string> kTinyEncoder{"--dim", "8", "--heads", "2", "--layers", "1", "--ff", "8", "--max-len",
                                            "32", "--epochs", "2", "--lr", "1e-3", "--num-seeds", "1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("help lists subcommands and flags") {
  auto r = run({"--help"});
  CHECK(r.code == 0);
  for (const char* s : {"synth", "featurize", "train", "eval", "extend", "stats", "bench", "aggregate"}) {
    CHECK(r.out.find(s) != std::string::npos);
  }
  auto t = run({"train", "--help"});
  CHECK(t.code == 0);
  for (const char* s : {"--variant", "--window", "--global-mode", "--buckets", "--search-buckets", "--lr", "--patience",
                        "--segments", "--init", "--config"}) {
    CHECK(t.out.find(s) != std::string::npos);
  }
}

TEST_CASE("usage errors") {
  auto r = run({"train"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--data") != std::string::npos);
  CHECK(run({"frobnicate"}).code != 0);
  auto bad = run({"stats", "--data", "/nonexistent/dir"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("data directory not found") != std::string::npos);
  CHECK(run({"--isa", "mmx", "stats", "--data", "x"}).code == 1);
}

TEST_CASE("synth, stats and featurize") {
  const auto root = testing::temp_dir("cli_basic");
  const auto data = make_data(root, "toy");
  for (const char* f : {"task.json", "train.jsonl", "dev.jsonl", "test.jsonl"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(data) / f));
  }
  auto s = run({"stats", "--data", data, "--dedup"});
  CHECK(s.code == 0);
  CHECK(s.out.find("train") != std::string::npos);
  CHECK(s.out.find("(") != std::string::npos);

  const auto model = (root / "tfidf.json").string();
  auto f = run({"featurize", "--data", data, "--out", model, "--buckets", "4", "--preview", "2", "--preview-len", "5"});
  CHECK(f.code == 0);
  CHECK(f.out.find("bucket boundaries") != std::string::npos);
  const auto [tfidf, buckets] = load_tfidf(model);
  CHECK(tfidf.n_max() == 3);
  REQUIRE(buckets);
  CHECK(buckets->num_buckets() == 4);
}

TEST_CASE("train then eval reproduces the dev scores") {
  const auto root = testing::temp_dir("cli_train");
  const auto data = make_data(root, "toy");
  for (const char* variant : {"tfidf-svm", "tfidf-srt-emb-legalbert"}) {
    CAPTURE(variant);
    const auto ckpt = (root / (std::string(variant) + ".json")).string();
    const auto report = (root / (std::string(variant) + ".report.json")).string();
    auto t = run(with({"train", "--data", data, "--variant", variant, "--checkpoint", ckpt, "--report", report,
                       "--buckets", "4"},
                      kTinyEncoder));
    REQUIRE(t.code == 0);
    const auto trained = read_report(report);
    const auto eval_report = (root / "eval.json").string();
    auto e = run({"eval", "--checkpoint", ckpt, "--data", data, "--report", eval_report, "--time", "3"});
    REQUIRE(e.code == 0);
    const auto evaluated = read_report(eval_report);
    CHECK(evaluated.splits.at("dev") == trained.splits.at("dev"));
    CHECK(evaluated.splits.at("test") == trained.splits.at("test"));
    CHECK(evaluated.parameter_count == trained.parameter_count);
    CHECK(evaluated.seconds_per_sample.has_value());
    CHECK(e.out.find("micro-F1") != std::string::npos);
  }
}

TEST_CASE("config file supplies options") {
  const auto root = testing::temp_dir("cli_config");
  const auto data = make_data(root, "toy");
  const auto conf = (root / "run.ini").string();
  write_text_file(conf, "variant = legalbert\ndim = 8\nheads = 2\nlayers = 1\nff = 8\nmax-len = 32\n"
                        "epochs = 1\nlr = 0.001\nnum-seeds = 1\n");
  const auto a = (root / "a.json").string();
  const auto b = (root / "b.json").string();
  REQUIRE(run({"train", "--data", data, "--config", conf, "--report", a}).code == 0);
  const auto from_file = read_report(a);
  CHECK(from_file.model == "legalbert");
  CHECK(from_file.settings.at("dim") == "8");
  CHECK(from_file.epochs_run == 1);

  // command-line values win over the file
  REQUIRE(run({"train", "--data", data, "--config", conf, "--dim", "4", "--report", b}).code == 0);
  CHECK(read_report(b).settings.at("dim") == "4");

  write_text_file(conf, "no-such-option = 1\n");
  auto bad = run({"train", "--data", data, "--config", conf});
  CHECK(bad.code != 0);
  CHECK(bad.err.find("no-such-option") != std::string::npos);
  CHECK(run({"train", "--data", data, "--config", (root / "missing.ini").string()}).code == 2);
}

TEST_CASE("extend and warm-started training") {
  const auto root = testing::temp_dir("cli_extend");
  const auto data = make_data(root, "toy");
  const auto base = (root / "base.json").string();
  REQUIRE(run(with({"train", "--data", data, "--variant", "legalbert", "--checkpoint", base}, kTinyEncoder)).code == 0);

  const auto ext = (root / "ext.json").string();
  auto x = run({"extend", "--checkpoint", base, "--out", ext, "--target-len", "128", "--sparse", "--window", "8",
                "--separate-global", "--global-mode", "par", "--variant", "legal-longformer-8192-par"});
  REQUIRE(x.code == 0);
  CHECK(x.out.find("positions 32 -> 128 (clone factor 4)") != std::string::npos);
  const auto ck = load_checkpoint(ext);
  CHECK(ck.encoder->config.max_positions == 128);
  CHECK(ck.encoder->config.attention.separate_global_projection);
  CHECK(run({"eval", "--checkpoint", ext, "--data", data}).code == 0);
  CHECK(run({"extend", "--checkpoint", base, "--out", ext, "--target-len", "16"}).code == 1);
  CHECK(run({"extend", "--checkpoint", base, "--out", ext, "--window", "7"}).code == 1);

  auto w = run(with({"train", "--data", data, "--variant", "legal-longformer", "--init", base, "--max-len", "64",
                     "--window", "8"},
                    {"--epochs", "1", "--lr", "1e-3", "--num-seeds", "1"}));
  CHECK(w.code == 0);
  auto missing = run({"train", "--data", data, "--variant", "legal-longformer"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("needs --init") != std::string::npos);

  auto bm = run({"bench", "model", "--checkpoint", ext, "--data", data, "--limit", "3"});
  CHECK(bm.code == 0);
  CHECK(bm.out.find("activation bytes/sample") != std::string::npos);
}

TEST_CASE("aggregate reports") {
  const auto root = testing::temp_dir("cli_aggregate");
  const std::vector<std::pair<std::string, std::pair<double, double>>> cells{
      {"ecthr-a", {0.626, 0.489}}, {"ecthr-b", {0.730, 0.638}}, {"scotus", {0.740, 0.644}}};
  std::vector<std::string> args{"aggregate", "--csv", (root / "t.csv").string()};
  for (const auto& [task, s] : cells) {
    EvalReport r;
    r.model = "tfidf-svm";
    r.task = task;
    r.splits["test"] = {s.first, s.second};
    const auto p = (root / (task + ".json")).string();
    write_report(p, r);
    args.push_back(p);
  }
  auto a = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("69.5") != std::string::npos);
  CHECK(a.out.find("58.1") != std::string::npos);
  const auto csv = read_text_file(root / "t.csv");
  CHECK(csv.find("model,ecthr-a micro,ecthr-a macro") == 0);
  CHECK(csv.find("tfidf-svm,62.6,48.9,73.0,63.8,74.0,64.4,69.5,58.1") != std::string::npos);

  args.push_back(args.back());
  CHECK(run(args).code == 1);
  CHECK(run({"aggregate", (root / "ecthr-a.json").string(), "--split", "dev"}).code == 1);
}

TEST_CASE("bench attention") {
  auto r = run({"bench", "attention", "--n", "32", "64", "--window", "8", "--head-dim", "4", "--repeats", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("sparse") != std::string::npos);
  CHECK(run({"bench", "attention", "--window", "7"}).code == 1);
}
