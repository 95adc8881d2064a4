#include <doctest.h>

#include <cmath>
#include <numeric>

#include "longdoc/encoder.hpp"
#include "longdoc/error.hpp"
#include "longdoc/layers.hpp"
#include "longdoc/rng.hpp"
#include "support.hpp"

using namespace longdoc;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// y = W x + b for one row.
Vec affine(const Matrix& w, const Matrix& b, const Vec& x) {
  Vec y(w.rows());
  for (std::size_t o = 0; o < w.rows(); ++o) {
    y[o] = b(0, o);
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w(o, i) * x[i];
  }
  return y;
}

Vec layer_norm(const Vec& x, const Matrix& g, const Matrix& b) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = g(0, i) * (x[i] - mean) / std::sqrt(var + 1e-12) + b(0, i);
  return y;
}

// One-layer, one-head, full-attention classifier written out by hand.
Vec naive_logits(const Model& m, const std::vector<TokenId>& tokens) {
  const auto& st = m.state;
  const auto& blk = st.blocks.at(0);
  const std::size_t n = tokens.size(), d = m.config.model_dim();
  Mat x(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec e(d);
    for (std::size_t c = 0; c < d; ++c) e[c] = st.token_embeddings(tokens[i], c) + st.position_embeddings(i, c);
    x[i] = layer_norm(e, st.embedding_ln_gain, st.embedding_ln_bias);
  }
  Mat q(n), k(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = affine(blk.wq, blk.bq, x[i]);
    k[i] = affine(blk.wk, blk.bk, x[i]);
    v[i] = affine(blk.wv, blk.bv, x[i]);
  }
  Mat out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec s(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = 0.0;
      for (std::size_t c = 0; c < d; ++c) s[j] += q[i][c] * k[j][c];
      s[j] /= std::sqrt(static_cast<double>(d));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& e : s) z += (e = std::exp(e - mx));
    Vec ctx(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) ctx[c] += s[j] / z * v[j][c];
    Vec a = affine(blk.wo, blk.bo, ctx);
    for (std::size_t c = 0; c < d; ++c) a[c] += x[i][c];
    Vec h = layer_norm(a, blk.ln1_gain, blk.ln1_bias);
    Vec f = affine(blk.w1, blk.b1, h);
    for (double& e : f) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
    Vec g = affine(blk.w2, blk.b2, f);
    for (std::size_t c = 0; c < d; ++c) g[c] += h[c];
    out[i] = layer_norm(g, blk.ln2_gain, blk.ln2_bias);
  }
  return affine(st.classifier_weights, st.classifier_bias, out[0]);
}

ModelInput flat_input(SequenceInput s) {
  ModelInput in;
  in.segments.push_back(std::move(s));
  return in;
}

double max_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("one-layer model matches a hand-written forward pass") {
  auto cfg = testing::toy_config(Variant::flat_dense);
  cfg.layers = 1;
  cfg.attention.heads = 1;
  cfg.attention.head_dim = 4;
  auto model = testing::toy_model(cfg, 3);
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto seq = testing::random_sequence(cfg, 2 + rng.index(8), rng);
    CHECK(max_diff(logits(model, flat_input(seq)), naive_logits(model, seq.tokens)) < 1e-10);
  }
}

TEST_CASE("embedding arithmetic") {
  auto cfg = testing::toy_config(Variant::flat_dense, true);
  auto model = testing::toy_model(cfg, 5);
  SequenceInput s{{kCls, 5, 5}, {-1, 2, 2}};
  auto e = embedding_sum(model, s);
  const auto& st = model.state;
  for (std::size_t c = 0; c < cfg.model_dim(); ++c) {
    CHECK(e(0, c) == st.token_embeddings(kCls, c) + st.position_embeddings(0, c));
    CHECK(e(1, c) == doctest::Approx(st.token_embeddings(5, c) + st.position_embeddings(1, c) + st.bucket_embeddings(2, c)));
    // same token and bucket: rows differ only by the positional term
    CHECK(e(2, c) - e(1, c) == doctest::Approx(st.position_embeddings(2, c) - st.position_embeddings(1, c)));
  }
  SequenceInput plain{{kCls, 5, 5}, {}};
  auto p = embedding_sum(model, plain);
  for (std::size_t c = 0; c < cfg.model_dim(); ++c) CHECK(p(1, c) == st.token_embeddings(5, c) + st.position_embeddings(1, c));

  auto normed = embed(model, plain);
  auto ref = layer_norm_forward(p, st.embedding_ln_gain, st.embedding_ln_bias, 1e-12, nullptr);
  CHECK(normed == ref);

  SequenceInput bad_bucket{{kCls, 5}, {-1, 3}};
  CHECK_THROWS_AS(embedding_sum(model, bad_bucket), Error);
  SequenceInput too_long{std::vector<TokenId>(11, 5), {}};
  too_long.tokens[0] = kCls;
  CHECK_THROWS_WITH_AS(embedding_sum(model, too_long), "encoder: input exceeds max_positions", Error);
}

TEST_CASE("encode") {
  for (auto variant : {Variant::flat_dense, Variant::flat_sparse}) {
    auto cfg = testing::toy_config(variant);
    auto model = testing::toy_model(cfg, 6);
    Rng rng(7);
    auto seq = testing::random_sequence(cfg, 8, rng);
    CHECK(encode(model, seq).size() == cfg.model_dim());
    SequenceInput no_cls{{5, 6}, {}};
    CHECK_THROWS_AS(encode(model, no_cls), Error);
  }
}

TEST_CASE("sparse equals dense when the window covers the input") {
  auto sparse_cfg = testing::toy_config(Variant::flat_sparse);
  sparse_cfg.attention.window = 18;
  sparse_cfg.attention.global_mode = GlobalMode::cls_only;
  auto dense_cfg = sparse_cfg;
  dense_cfg.variant = Variant::flat_dense;
  auto sparse = testing::toy_model(sparse_cfg, 8);
  Model dense{dense_cfg, sparse.state};
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = flat_input(testing::random_sequence(sparse_cfg, 2 + rng.index(9), rng));
    CHECK(max_diff(logits(sparse, in), logits(dense, in)) <= 1e-12);
  }
  // with a narrow window the models disagree
  sparse.config.attention.window = 2;
  auto in = flat_input(testing::random_sequence(sparse_cfg, 10, rng, false));
  CHECK(max_diff(logits(sparse, in), logits(dense, in)) > 1e-9);
}

TEST_CASE("hierarchical encoding") {
  auto cfg = testing::toy_config(Variant::hierarchical);
  cfg.segment_layers = 0;
  auto model = testing::toy_model(cfg, 10);
  Rng rng(11);
  auto a = testing::random_sequence(cfg, 6, rng);
  auto b = testing::random_sequence(cfg, 4, rng);

  std::vector<SequenceInput> one{a};
  CHECK(hierarchical_encode(model, one, Pooling::first) == encode(model, a));

  std::vector<SequenceInput> two{a, b};
  auto ea = encode(model, a), eb = encode(model, b);
  auto pooled = hierarchical_encode(model, two, Pooling::max);
  for (std::size_t c = 0; c < ea.size(); ++c) CHECK(pooled[c] == std::max(ea[c], eb[c]));
  CHECK(hierarchical_encode(model, two, Pooling::first) == ea);

  std::vector<SequenceInput> dup{a, a};
  CHECK(hierarchical_encode(model, dup, Pooling::max) == encode(model, a));

  std::vector<SequenceInput> none;
  CHECK_THROWS_AS(hierarchical_encode(model, none, Pooling::max), Error);
  std::vector<SequenceInput> four{a, a, a, a};
  CHECK_THROWS_AS(hierarchical_encode(model, four, Pooling::max), Error);

  // logits use the configured pooling
  ModelInput in;
  in.segments = two;
  Vec expect(cfg.num_labels);
  for (std::size_t l = 0; l < cfg.num_labels; ++l) {
    expect[l] = model.state.classifier_bias(0, l);
    for (std::size_t c = 0; c < pooled.size(); ++c) expect[l] += model.state.classifier_weights(l, c) * pooled[c];
  }
  CHECK(max_diff(logits(model, in), expect) < 1e-12);
}

TEST_CASE("segment blocks contextualize segments") {
  auto cfg = testing::toy_config(Variant::hierarchical);
  auto model = testing::toy_model(cfg, 12);
  Rng rng(13);
  auto a = testing::random_sequence(cfg, 6, rng);
  auto b = testing::random_sequence(cfg, 5, rng);
  std::vector<SequenceInput> ab{a, b}, ba{b, a};
  // segment position embeddings make the order matter
  CHECK(hierarchical_encode(model, ab, Pooling::first) != hierarchical_encode(model, ba, Pooling::first));
  CHECK(model.state.segment_blocks.size() == 1);
  CHECK(model.state.segment_position_embeddings.rows() == cfg.max_segments);
}

TEST_CASE("loss values") {
  SUBCASE("uniform logits") {
    auto cfg = testing::toy_config(Variant::flat_dense);
    auto model = testing::toy_model(cfg, 14);
    model.state.classifier_weights.fill(0.0);
    model.state.classifier_bias.fill(0.0);
    Rng rng(15);
    std::vector<Example> batch{testing::random_example(cfg, rng), testing::random_example(cfg, rng)};
    CHECK(forward_loss(model, batch).loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    model.config.task_kind = TaskKind::multi_label;
    batch[0].labels = {0, 2};
    batch[1].labels = {};
    CHECK(forward_loss(model, batch).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("matches a scalar computation from the logits") {
    for (auto kind : {TaskKind::single_label, TaskKind::multi_label}) {
      auto cfg = testing::toy_config(Variant::flat_sparse);
      cfg.task_kind = kind;
      auto model = testing::toy_model(cfg, 16);
      Rng rng(17);
      std::vector<Example> batch;
      for (int i = 0; i < 4; ++i) batch.push_back(testing::random_example(cfg, rng));
      auto r = forward_loss(model, batch);
      double expect = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto z = logits(model, batch[b].input);
        for (std::size_t l = 0; l < z.size(); ++l) CHECK(r.logits(b, l) == z[l]);
        if (kind == TaskKind::single_label) {
          double s = 0.0;
          for (double v : z) s += std::exp(v);
          expect += -std::log(std::exp(z[static_cast<std::size_t>(batch[b].labels[0])]) / s);
        } else {
          double e = 0.0;
          for (std::size_t l = 0; l < z.size(); ++l) {
            const double p = 1.0 / (1.0 + std::exp(-z[l]));
            const bool y = std::count(batch[b].labels.begin(), batch[b].labels.end(), static_cast<LabelId>(l)) > 0;
            e += y ? -std::log(p) : -std::log(1.0 - p);
          }
          expect += e / static_cast<double>(z.size());
        }
      }
      CHECK(r.loss == doctest::Approx(expect / 4.0).epsilon(1e-12));
    }
  }
  SUBCASE("label errors and divergence") {
    auto cfg = testing::toy_config(Variant::flat_dense);
    auto model = testing::toy_model(cfg, 18);
    Rng rng(19);
    std::vector<Example> batch{testing::random_example(cfg, rng)};
    batch[0].labels = {7};
    CHECK_THROWS_AS(forward_loss(model, batch), Error);
    batch[0].labels = {0, 1};
    CHECK_THROWS_AS(forward_loss(model, batch), Error);
    batch[0].labels = {0};
    model.state.classifier_bias(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(forward_loss(model, batch), "encoder: numerical divergence", Error);
    std::vector<Example> empty;
    CHECK_THROWS_AS(forward_loss(model, empty), Error);
  }
}

TEST_CASE("gradients match finite differences for every variant") {
  struct Case {
    const char* name;
    Variant variant;
    bool buckets;
    bool separate_global;
    TaskKind kind;
  };
  const Case cases[] = {
      {"flat_dense", Variant::flat_dense, false, false, TaskKind::single_label},
      {"flat_dense+buckets", Variant::flat_dense, true, false, TaskKind::multi_label},
      {"flat_sparse", Variant::flat_sparse, false, false, TaskKind::single_label},
      {"flat_sparse+buckets", Variant::flat_sparse, true, false, TaskKind::single_label},
      {"flat_sparse+separate_global", Variant::flat_sparse, false, true, TaskKind::multi_label},
      {"hierarchical", Variant::hierarchical, false, false, TaskKind::single_label},
      {"hierarchical+buckets", Variant::hierarchical, true, false, TaskKind::multi_label},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto cfg = testing::toy_config(c.variant, c.buckets, c.separate_global);
    cfg.task_kind = c.kind;
    auto model = testing::toy_model(cfg, 20);
    Rng rng(21);
    std::vector<Example> batch{testing::random_example(cfg, rng), testing::random_example(cfg, rng)};
    auto r = testing::gradient_check(model, batch, 120, rng);
    CAPTURE(r.worst);
    CHECK(r.coordinates >= 100);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient structure") {
  auto cfg = testing::toy_config(Variant::flat_dense);
  auto model = testing::toy_model(cfg, 22);
  Example ex;
  ex.input.segments.push_back(SequenceInput{{kCls, 5, 6}, {}});
  ex.labels = {1};
  std::vector<Example> batch{ex};
  auto g = backward(model, batch);
  for (TokenId t = 0; t < static_cast<TokenId>(cfg.vocab_size); ++t) {
    if (t == kCls || t == 5 || t == 6) continue;
    for (double v : g.token_embeddings.row(static_cast<std::size_t>(t))) CHECK(v == 0.0);
  }
  for (std::size_t p = 3; p < cfg.max_positions; ++p)
    for (double v : g.position_embeddings.row(p)) CHECK(v == 0.0);
  CHECK(g.bucket_embeddings.empty());

  auto bcfg = testing::toy_config(Variant::flat_dense, true);
  auto bmodel = testing::toy_model(bcfg, 23);
  ex.input.segments[0].buckets = {-1, -1, -1};
  std::vector<Example> nb{ex};
  auto bg = backward(bmodel, nb);
  for (double v : bg.bucket_embeddings.values()) CHECK(v == 0.0);

  // zero classifier head on a zero-gain embedding: nothing flows back to tokens
  model.state.classifier_weights.fill(0.0);
  auto g0 = backward(model, batch);
  for (double v : g0.token_embeddings.values()) CHECK(v == 0.0);
}

TEST_CASE("forward_backward accumulates") {
  auto cfg = testing::toy_config(Variant::flat_sparse);
  auto model = testing::toy_model(cfg, 24);
  Rng rng(25);
  std::vector<Example> batch{testing::random_example(cfg, rng)};
  auto once = backward(model, batch);
  auto twice = model.state.zeros_like();
  forward_backward(model, batch, twice);
  forward_backward(model, batch, twice);
  std::vector<const Matrix*> a, b;
  once.visit([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  twice.visit([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j) CHECK(b[i]->values()[j] == doctest::Approx(2.0 * a[i]->values()[j]));
}

TEST_CASE("parameter count matches the closed form") {
  for (auto variant : {Variant::flat_dense, Variant::flat_sparse, Variant::hierarchical}) {
    for (bool buckets : {false, true}) {
      for (bool sep : {false, true}) {
        auto cfg = testing::toy_config(variant, buckets, sep);
        auto state = init_state(cfg, 1);
        CHECK(state.parameter_count() == analytic_parameter_count(cfg));
      }
    }
  }
  // d = 4, ff = 5, V = 12, P = 10, one block, 3 labels
  EncoderConfig c;
  c.vocab_size = 12;
  c.attention.heads = 1;
  c.attention.head_dim = 4;
  c.layers = 1;
  c.ff_dim = 5;
  c.max_positions = 10;
  c.num_labels = 3;
  const std::size_t block = 4 * (16 + 4) + 8 + (20 + 5) + (20 + 4) + 8;
  CHECK(analytic_parameter_count(c) == 12 * 4 + 10 * 4 + 8 + block + 3 * 4 + 3);
}

TEST_CASE("init_state and check_state") {
  auto cfg = testing::toy_config(Variant::flat_sparse, true, true);
  auto s = init_state(cfg, 3);
  CHECK(s.blocks[0].wq_global == s.blocks[0].wq);
  CHECK(s.blocks[1].bv_global == s.blocks[1].bv);
  for (double v : s.embedding_ln_gain.values()) CHECK(v == 1.0);
  for (double v : s.classifier_bias.values()) CHECK(v == 0.0);
  CHECK(init_state(cfg, 3).token_embeddings == s.token_embeddings);
  CHECK(!(init_state(cfg, 4).token_embeddings == s.token_embeddings));
  check_state(cfg, s);
  auto other = testing::toy_config(Variant::flat_sparse, false, true);
  CHECK_THROWS_AS(check_state(other, s), Error);
  s.blocks[0].w1(0, 0) = std::nan("");
  CHECK_THROWS_AS(check_state(cfg, s), Error);
}

TEST_CASE("config validation") {
  auto cfg = testing::toy_config(Variant::hierarchical);
  cfg.bow_transform = BowTransform::dedup_sort;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = testing::toy_config(Variant::flat_dense, true);
  cfg.buckets = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_variant_kind("flat_sparse") == Variant::flat_sparse);
  CHECK(parse_pooling("first") == Pooling::first);
  CHECK_THROWS_AS(parse_bow_transform("sorted"), Error);
}

TEST_CASE("word order matters without the bag-of-words transform") {
  for (auto variant : {Variant::flat_dense, Variant::flat_sparse}) {
    auto cfg = testing::toy_config(variant);
    auto model = testing::toy_model(cfg, 26);
    Rng rng(27);
    bool differs = false;
    for (int trial = 0; trial < 20 && !differs; ++trial) {
      auto seq = testing::random_sequence(cfg, 9, rng, false);
      auto perm = seq;
      std::shuffle(perm.tokens.begin() + 1, perm.tokens.end(), std::mt19937_64(static_cast<std::uint64_t>(trial)));
      differs = logits(model, flat_input(seq)) != logits(model, flat_input(perm));
    }
    CHECK(differs);
  }
}

TEST_CASE("activation bytes grow with input length") {
  auto cfg = testing::toy_config(Variant::flat_dense);
  auto model = testing::toy_model(cfg, 28);
  Rng rng(29);
  auto shorter = activation_bytes(model, flat_input(testing::random_sequence(cfg, 4, rng)));
  auto longer = activation_bytes(model, flat_input(testing::random_sequence(cfg, 10, rng)));
  CHECK(shorter > 0);
  CHECK(longer > shorter);
}
