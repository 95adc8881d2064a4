#include "longdoc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longdoc/error.hpp"
#include "longdoc/kernels.hpp"
#include "longdoc/linear.hpp"
#include "longdoc/rng.hpp"

namespace longdoc {
namespace {

Error encoder_error(const std::string& msg) { return Error("encoder", msg); }

constexpr double kInitStd = 0.02;

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = kInitStd * rng.normal();
  return m;
}

BlockWeights init_block(std::size_t d, std::size_t ff, bool separate_global, Rng& rng) {
  BlockWeights b;
  b.wq = random_matrix(d, d, rng);
  b.wk = random_matrix(d, d, rng);
  b.wv = random_matrix(d, d, rng);
  b.wo = random_matrix(d, d, rng);
  b.bq = Matrix(1, d);
  b.bk = Matrix(1, d);
  b.bv = Matrix(1, d);
  b.bo = Matrix(1, d);
  if (separate_global) {
    b.wq_global = b.wq;
    b.wk_global = b.wk;
    b.wv_global = b.wv;
    b.bq_global = b.bq;
    b.bk_global = b.bk;
    b.bv_global = b.bv;
  }
  b.ln1_gain = Matrix(1, d, 1.0);
  b.ln1_bias = Matrix(1, d);
  b.w1 = random_matrix(ff, d, rng);
  b.b1 = Matrix(1, ff);
  b.w2 = random_matrix(d, ff, rng);
  b.b2 = Matrix(1, d);
  b.ln2_gain = Matrix(1, d, 1.0);
  b.ln2_bias = Matrix(1, d);
  return b;
}

std::size_t block_parameter_count(std::size_t d, std::size_t ff, bool separate_global) {
  std::size_t n = 4 * (d * d + d);
  if (separate_global) n += 3 * (d * d + d);
  n += 2 * d;               // ln1
  n += ff * d + ff;         // w1, b1
  n += d * ff + d;          // w2, b2
  n += 2 * d;               // ln2
  return n;
}

void add_into(Matrix& dst, const Matrix& src) { kernels::axpy(1.0, src.values(), dst.values()); }

// ---------------------------------------------------------------------------
// Forward/backward with caches.

struct BlockCache {
  Matrix x;
  Matrix q, k, v, qg, kg, vg;
  AttentionCache attn;
  Matrix context;
  LayerNormCache ln1;
  Matrix h1;
  Matrix ff_pre;
  Matrix ff_act;
  LayerNormCache ln2;

  std::size_t bytes() const {
    std::size_t n = x.size() + q.size() + k.size() + v.size() + qg.size() + kg.size() + vg.size() +
                    context.size() + ln1.xhat.size() + ln1.inv_std.size() + h1.size() + ff_pre.size() +
                    ff_act.size() + ln2.xhat.size() + ln2.inv_std.size();
    return n * sizeof(double) + attn.bytes();
  }
};

Matrix block_forward(const BlockWeights& w, const Matrix& x, const AttentionPattern& pattern, std::size_t heads,
                     double eps, BlockCache* cache) {
  Matrix q = linear_forward(x, w.wq, w.bq);
  Matrix k = linear_forward(x, w.wk, w.bk);
  Matrix v = linear_forward(x, w.wv, w.bv);
  Matrix qg, kg, vg;
  AttentionInputs in{&q, &k, &v};
  if (w.has_global() && !pattern.globals().empty()) {
    qg = linear_forward(x, w.wq_global, w.bq_global);
    kg = linear_forward(x, w.wk_global, w.bk_global);
    vg = linear_forward(x, w.wv_global, w.bv_global);
    in.qg = &qg;
    in.kg = &kg;
    in.vg = &vg;
  }
  Matrix context = attention_forward(pattern, in, heads, cache != nullptr ? &cache->attn : nullptr);
  Matrix pre1 = linear_forward(context, w.wo, w.bo);
  add_into(pre1, x);
  Matrix h1 = layer_norm_forward(pre1, w.ln1_gain, w.ln1_bias, eps, cache != nullptr ? &cache->ln1 : nullptr);
  Matrix ff_pre = linear_forward(h1, w.w1, w.b1);
  Matrix ff_act(ff_pre.rows(), ff_pre.cols());
  for (std::size_t i = 0; i < ff_pre.size(); ++i) ff_act.values()[i] = gelu(ff_pre.values()[i]);
  Matrix pre2 = linear_forward(ff_act, w.w2, w.b2);
  add_into(pre2, h1);
  Matrix out = layer_norm_forward(pre2, w.ln2_gain, w.ln2_bias, eps, cache != nullptr ? &cache->ln2 : nullptr);
  if (cache != nullptr) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->qg = std::move(qg);
    cache->kg = std::move(kg);
    cache->vg = std::move(vg);
    cache->context = std::move(context);
    cache->h1 = std::move(h1);
    cache->ff_pre = std::move(ff_pre);
    cache->ff_act = std::move(ff_act);
  }
  return out;
}

Matrix block_backward(const BlockWeights& w, const AttentionPattern& pattern, std::size_t heads,
                      const BlockCache& c, const Matrix& d_out, BlockWeights& g) {
  Matrix d_pre2 = layer_norm_backward(d_out, w.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);
  Matrix d_act = linear_backward(c.ff_act, w.w2, d_pre2, g.w2, g.b2);
  for (std::size_t i = 0; i < d_act.size(); ++i) d_act.values()[i] *= gelu_derivative(c.ff_pre.values()[i]);
  Matrix d_h1 = linear_backward(c.h1, w.w1, d_act, g.w1, g.b1);
  add_into(d_h1, d_pre2);
  Matrix d_pre1 = layer_norm_backward(d_h1, w.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
  Matrix d_context = linear_backward(c.context, w.wo, d_pre1, g.wo, g.bo);

  const std::size_t n = c.q.rows();
  const std::size_t d = c.q.cols();
  Matrix dq(n, d), dk(n, d), dv(n, d), dqg, dkg, dvg;
  AttentionInputs in{&c.q, &c.k, &c.v};
  AttentionGrads ag{&dq, &dk, &dv};
  const bool global = !c.qg.empty();
  if (global) {
    dqg = Matrix(n, d);
    dkg = Matrix(n, d);
    dvg = Matrix(n, d);
    in.qg = &c.qg;
    in.kg = &c.kg;
    in.vg = &c.vg;
    ag.qg = &dqg;
    ag.kg = &dkg;
    ag.vg = &dvg;
  }
  attention_backward(pattern, in, heads, c.attn, d_context, ag);

  Matrix dx = std::move(d_pre1);  // residual path
  add_into(dx, linear_backward(c.x, w.wq, dq, g.wq, g.bq));
  add_into(dx, linear_backward(c.x, w.wk, dk, g.wk, g.bk));
  add_into(dx, linear_backward(c.x, w.wv, dv, g.wv, g.bv));
  if (global) {
    add_into(dx, linear_backward(c.x, w.wq_global, dqg, g.wq_global, g.bq_global));
    add_into(dx, linear_backward(c.x, w.wk_global, dkg, g.wk_global, g.bk_global));
    add_into(dx, linear_backward(c.x, w.wv_global, dvg, g.wv_global, g.bv_global));
  }
  return dx;
}

struct SequenceCache {
  const SequenceInput* input = nullptr;
  LayerNormCache embedding_ln;
  AttentionPattern pattern;
  std::vector<BlockCache> blocks;
  Matrix output;
};

struct ForwardCache {
  std::vector<SequenceCache> sequences;
  // Hierarchical segment stage.
  AttentionPattern segment_pattern;
  std::vector<BlockCache> segment_blocks;
  Matrix segment_output;
  std::vector<std::size_t> pool_argmax;
  std::vector<double> pooled;
  std::vector<double> logits;

  std::size_t bytes() const {
    std::size_t n = 0;
    for (const auto& s : sequences) {
      n += (s.embedding_ln.xhat.size() + s.embedding_ln.inv_std.size() + s.output.size()) * sizeof(double);
      for (const auto& b : s.blocks) n += b.bytes();
    }
    for (const auto& b : segment_blocks) n += b.bytes();
    n += (segment_output.size() + pooled.size() + logits.size()) * sizeof(double);
    return n;
  }
};

void check_sequence(const Model& model, const SequenceInput& input) {
  const auto& cfg = model.config;
  if (input.tokens.empty() || input.tokens.front() != kCls) throw encoder_error("input must start with CLS");
  if (input.tokens.size() > cfg.max_positions) throw encoder_error("input exceeds max_positions");
  if (input.tokens.size() > cfg.max_sequence_length()) {
    throw encoder_error("input length " + std::to_string(input.tokens.size()) + " exceeds the variant maximum " +
                        std::to_string(cfg.max_sequence_length()));
  }
  if (!input.buckets.empty() && input.buckets.size() != input.tokens.size()) {
    throw encoder_error("bucket indices must match token count");
  }
  for (TokenId t : input.tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) throw encoder_error("token id outside vocabulary");
  }
  for (auto b : input.buckets) {
    if (b >= 0 && (!cfg.use_tfidf_embeddings || static_cast<std::size_t>(b) >= cfg.buckets)) {
      throw encoder_error("bucket index outside [0, B)");
    }
  }
}

AttentionPattern sequence_pattern(const EncoderConfig& cfg, const SequenceInput& input) {
  if (cfg.variant == Variant::flat_sparse) {
    return AttentionPattern::banded(input.tokens.size(), cfg.attention.window,
                                    global_positions(input.tokens, cfg.attention.global_mode));
  }
  return AttentionPattern::full(input.tokens.size());
}

Matrix sequence_forward(const Model& model, const SequenceInput& input, SequenceCache* cache) {
  check_sequence(model, input);
  const auto& cfg = model.config;
  Matrix x = layer_norm_forward(embedding_sum(model, input), model.state.embedding_ln_gain,
                                model.state.embedding_ln_bias, cfg.layer_norm_eps,
                                cache != nullptr ? &cache->embedding_ln : nullptr);
  AttentionPattern pattern = sequence_pattern(cfg, input);
  if (cache != nullptr) cache->blocks.resize(model.state.blocks.size());
  for (std::size_t l = 0; l < model.state.blocks.size(); ++l) {
    x = block_forward(model.state.blocks[l], x, pattern, cfg.attention.heads, cfg.layer_norm_eps,
                      cache != nullptr ? &cache->blocks[l] : nullptr);
  }
  if (cache != nullptr) {
    cache->input = &input;
    cache->pattern = std::move(pattern);
    cache->output = x;
  }
  return x;
}

// d_output is the gradient w.r.t. the final block output of the sequence.
void sequence_backward(const Model& model, const SequenceCache& cache, Matrix d_output, ModelState& grads) {
  const auto& cfg = model.config;
  for (std::size_t l = model.state.blocks.size(); l-- > 0;) {
    d_output = block_backward(model.state.blocks[l], cache.pattern, cfg.attention.heads, cache.blocks[l], d_output,
                              grads.blocks[l]);
  }
  Matrix d_sum = layer_norm_backward(d_output, model.state.embedding_ln_gain, cache.embedding_ln,
                                     grads.embedding_ln_gain, grads.embedding_ln_bias);
  const auto& input = *cache.input;
  for (std::size_t i = 0; i < input.tokens.size(); ++i) {
    auto row = d_sum.row(i);
    kernels::axpy(1.0, row, grads.token_embeddings.row(static_cast<std::size_t>(input.tokens[i])));
    kernels::axpy(1.0, row, grads.position_embeddings.row(i));
    if (!input.buckets.empty() && input.buckets[i] >= 0) {
      kernels::axpy(1.0, row, grads.bucket_embeddings.row(static_cast<std::size_t>(input.buckets[i])));
    }
  }
}

std::vector<double> pool_rows(const Matrix& z, Pooling pooling, std::vector<std::size_t>* argmax) {
  std::vector<double> out(z.row(0).begin(), z.row(0).end());
  if (argmax != nullptr) argmax->assign(z.cols(), 0);
  if (pooling == Pooling::first) return out;
  for (std::size_t r = 1; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < z.cols(); ++c) {
      if (row[c] > out[c]) {
        out[c] = row[c];
        if (argmax != nullptr) (*argmax)[c] = r;
      }
    }
  }
  return out;
}

// Runs the full model on one input and returns the logits.
std::vector<double> model_forward(const Model& model, const ModelInput& input, ForwardCache* cache) {
  const auto& cfg = model.config;
  const auto& st = model.state;
  if (input.segments.empty()) throw encoder_error("empty segment list");
  std::vector<double> pooled;
  if (cfg.variant == Variant::hierarchical) {
    if (input.segments.size() > cfg.max_segments) throw encoder_error("more segments than max_segments");
    const std::size_t s = input.segments.size();
    const std::size_t d = cfg.model_dim();
    Matrix z(s, d);
    if (cache != nullptr) cache->sequences.resize(s);
    for (std::size_t i = 0; i < s; ++i) {
      Matrix out = sequence_forward(model, input.segments[i], cache != nullptr ? &cache->sequences[i] : nullptr);
      std::copy(out.row(0).begin(), out.row(0).end(), z.row(i).begin());
    }
    if (!st.segment_blocks.empty()) {
      for (std::size_t i = 0; i < s; ++i) kernels::axpy(1.0, st.segment_position_embeddings.row(i), z.row(i));
      AttentionPattern pattern = AttentionPattern::full(s);
      if (cache != nullptr) cache->segment_blocks.resize(st.segment_blocks.size());
      for (std::size_t l = 0; l < st.segment_blocks.size(); ++l) {
        z = block_forward(st.segment_blocks[l], z, pattern, cfg.attention.heads, cfg.layer_norm_eps,
                          cache != nullptr ? &cache->segment_blocks[l] : nullptr);
      }
      if (cache != nullptr) cache->segment_pattern = std::move(pattern);
    }
    pooled = pool_rows(z, cfg.pooling, cache != nullptr ? &cache->pool_argmax : nullptr);
    if (cache != nullptr) cache->segment_output = std::move(z);
  } else {
    if (input.segments.size() != 1) throw encoder_error("flat variants take exactly one sequence");
    if (cache != nullptr) cache->sequences.resize(1);
    Matrix out = sequence_forward(model, input.segments[0], cache != nullptr ? &cache->sequences[0] : nullptr);
    pooled.assign(out.row(0).begin(), out.row(0).end());
  }
  std::vector<double> z(cfg.num_labels);
  for (std::size_t l = 0; l < z.size(); ++l) {
    z[l] = kernels::dot(st.classifier_weights.row(l), pooled) + st.classifier_bias(0, l);
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw encoder_error("numerical divergence");
  }
  if (cache != nullptr) {
    cache->pooled = pooled;
    cache->logits = z;
  }
  return z;
}

void model_backward(const Model& model, const ForwardCache& cache, std::span<const double> d_logits,
                    ModelState& grads) {
  const auto& cfg = model.config;
  const auto& st = model.state;
  const std::size_t d = cfg.model_dim();
  std::vector<double> d_pooled(d, 0.0);
  for (std::size_t l = 0; l < cfg.num_labels; ++l) {
    kernels::axpy(d_logits[l], cache.pooled, grads.classifier_weights.row(l));
    grads.classifier_bias(0, l) += d_logits[l];
    kernels::axpy(d_logits[l], st.classifier_weights.row(l), d_pooled);
  }
  if (cfg.variant == Variant::hierarchical) {
    const std::size_t s = cache.sequences.size();
    Matrix dz(s, d);
    for (std::size_t c = 0; c < d; ++c) dz(cache.pool_argmax[c], c) = d_pooled[c];
    if (!st.segment_blocks.empty()) {
      for (std::size_t l = st.segment_blocks.size(); l-- > 0;) {
        dz = block_backward(st.segment_blocks[l], cache.segment_pattern, cfg.attention.heads, cache.segment_blocks[l],
                            dz, grads.segment_blocks[l]);
      }
      for (std::size_t i = 0; i < s; ++i) kernels::axpy(1.0, dz.row(i), grads.segment_position_embeddings.row(i));
    }
    for (std::size_t i = 0; i < s; ++i) {
      const auto& seq = cache.sequences[i];
      Matrix d_out(seq.output.rows(), d);
      std::copy(dz.row(i).begin(), dz.row(i).end(), d_out.row(0).begin());
      sequence_backward(model, seq, std::move(d_out), grads);
    }
  } else {
    const auto& seq = cache.sequences[0];
    Matrix d_out(seq.output.rows(), d);
    std::copy(d_pooled.begin(), d_pooled.end(), d_out.row(0).begin());
    sequence_backward(model, seq, std::move(d_out), grads);
  }
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Loss of one example and its gradient w.r.t. the logits (unscaled by batch size).
double example_loss(const EncoderConfig& cfg, std::span<const double> z, const LabelSet& labels,
                    std::vector<double>* d_logits) {
  const std::size_t c = z.size();
  for (LabelId l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) throw encoder_error("label id out of range");
  }
  if (d_logits != nullptr) d_logits->assign(c, 0.0);
  if (cfg.task_kind == TaskKind::single_label) {
    if (labels.size() != 1) throw encoder_error("single_label examples need exactly one label");
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    const auto y = static_cast<std::size_t>(labels[0]);
    if (d_logits != nullptr) {
      for (std::size_t l = 0; l < c; ++l) (*d_logits)[l] = std::exp(z[l] - log_z) - (l == y ? 1.0 : 0.0);
    }
    return log_z - z[y];
  }
  double loss = 0.0;
  for (std::size_t l = 0; l < c; ++l) {
    const bool pos = std::binary_search(labels.begin(), labels.end(), static_cast<LabelId>(l));
    // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    loss += softplus(z[l]) - (pos ? z[l] : 0.0);
    if (d_logits != nullptr) (*d_logits)[l] = (sigmoid(z[l]) - (pos ? 1.0 : 0.0)) / static_cast<double>(c);
  }
  return loss / static_cast<double>(c);
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::flat_dense: return "flat_dense";
    case Variant::flat_sparse: return "flat_sparse";
    case Variant::hierarchical: return "hierarchical";
  }
  return "?";
}

std::string_view to_string(BowTransform b) { return b == BowTransform::none ? "none" : "dedup_sort"; }
std::string_view to_string(Pooling p) { return p == Pooling::first ? "first" : "max"; }

Variant parse_variant_kind(std::string_view s) {
  if (s == "flat_dense") return Variant::flat_dense;
  if (s == "flat_sparse") return Variant::flat_sparse;
  if (s == "hierarchical") return Variant::hierarchical;
  throw encoder_error("unknown encoder variant '" + std::string(s) + "'");
}

BowTransform parse_bow_transform(std::string_view s) {
  if (s == "none") return BowTransform::none;
  if (s == "dedup_sort") return BowTransform::dedup_sort;
  throw encoder_error("unknown bow transform '" + std::string(s) + "'");
}

Pooling parse_pooling(std::string_view s) {
  if (s == "first") return Pooling::first;
  if (s == "max") return Pooling::max;
  throw encoder_error("unknown pooling '" + std::string(s) + "'");
}

void EncoderConfig::validate() const {
  attention.validate();
  if (vocab_size <= kNumReserved) throw encoder_error("vocabulary must contain non-reserved tokens");
  if (max_positions < 1) throw encoder_error("max_positions must be >= 1");
  if (use_tfidf_embeddings && buckets < 1) throw encoder_error("TF-IDF embeddings need B >= 1");
  if (num_labels < 1) throw encoder_error("num_labels must be >= 1");
  if (ff_dim < 1) throw encoder_error("ff_dim must be >= 1");
  if (variant == Variant::hierarchical) {
    if (max_segments < 1) throw encoder_error("max_segments must be >= 1");
    if (segment_len < 2) throw encoder_error("segment_len must be >= 2");
    if (segment_len > max_positions) throw encoder_error("segment_len exceeds max_positions");
    if (bow_transform != BowTransform::none) throw encoder_error("dedup_sort requires a flat variant");
  }
}

ModelState ModelState::zeros_like() const {
  ModelState z = *this;
  z.visit([](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

bool ModelState::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) {
    for (double v : m.values()) ok = ok && std::isfinite(v);
  });
  return ok;
}

std::size_t analytic_parameter_count(const EncoderConfig& cfg) {
  const std::size_t d = cfg.model_dim();
  std::size_t n = cfg.vocab_size * d + cfg.max_positions * d + 2 * d;
  if (cfg.use_tfidf_embeddings) n += cfg.buckets * d;
  n += cfg.layers * block_parameter_count(d, cfg.ff_dim, cfg.attention.separate_global_projection);
  if (cfg.variant == Variant::hierarchical && cfg.segment_layers > 0) {
    n += cfg.max_segments * d + cfg.segment_layers * block_parameter_count(d, cfg.ff_dim, false);
  }
  n += cfg.num_labels * d + cfg.num_labels;
  return n;
}

ModelState init_state(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.model_dim();
  ModelState s;
  s.token_embeddings = random_matrix(cfg.vocab_size, d, rng);
  s.position_embeddings = random_matrix(cfg.max_positions, d, rng);
  if (cfg.use_tfidf_embeddings) s.bucket_embeddings = random_matrix(cfg.buckets, d, rng);
  s.embedding_ln_gain = Matrix(1, d, 1.0);
  s.embedding_ln_bias = Matrix(1, d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    s.blocks.push_back(init_block(d, cfg.ff_dim, cfg.attention.separate_global_projection, rng));
  }
  if (cfg.variant == Variant::hierarchical && cfg.segment_layers > 0) {
    s.segment_position_embeddings = random_matrix(cfg.max_segments, d, rng);
    for (std::size_t l = 0; l < cfg.segment_layers; ++l) s.segment_blocks.push_back(init_block(d, cfg.ff_dim, false, rng));
  }
  s.classifier_weights = random_matrix(cfg.num_labels, d, rng);
  s.classifier_bias = Matrix(1, cfg.num_labels);
  return s;
}

void check_state(const EncoderConfig& cfg, const ModelState& state) {
  ModelState expected = init_state(cfg, 0);
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> want, got;
  expected.visit([&](const std::string& n, const Matrix& m) { want.push_back({n, {m.rows(), m.cols()}}); });
  state.visit([&](const std::string& n, const Matrix& m) { got.push_back({n, {m.rows(), m.cols()}}); });
  if (want != got) throw encoder_error("model arrays do not match the configuration");
  if (!state.all_finite()) throw encoder_error("model contains non-finite values");
}

Matrix embedding_sum(const Model& model, const SequenceInput& input) {
  check_sequence(model, input);
  const auto& st = model.state;
  const std::size_t n = input.tokens.size();
  Matrix e(n, model.config.model_dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto row = e.row(i);
    auto tok = st.token_embeddings.row(static_cast<std::size_t>(input.tokens[i]));
    auto pos = st.position_embeddings.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = tok[c] + pos[c];
    if (!input.buckets.empty() && input.buckets[i] >= 0) {
      kernels::axpy(1.0, st.bucket_embeddings.row(static_cast<std::size_t>(input.buckets[i])), row);
    }
  }
  return e;
}

Matrix embed(const Model& model, const SequenceInput& input) {
  return layer_norm_forward(embedding_sum(model, input), model.state.embedding_ln_gain, model.state.embedding_ln_bias,
                            model.config.layer_norm_eps, nullptr);
}

std::vector<double> encode(const Model& model, const SequenceInput& input) {
  Matrix out = sequence_forward(model, input, nullptr);
  return {out.row(0).begin(), out.row(0).end()};
}

std::vector<double> hierarchical_encode(const Model& model, std::span<const SequenceInput> segments,
                                        Pooling pooling) {
  if (segments.empty()) throw encoder_error("empty segment list");
  if (model.config.variant != Variant::hierarchical) throw encoder_error("model is not hierarchical");
  if (segments.size() > model.config.max_segments) throw encoder_error("more segments than max_segments");
  const auto& st = model.state;
  const auto& cfg = model.config;
  Matrix z(segments.size(), cfg.model_dim());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto v = encode(model, segments[i]);
    std::copy(v.begin(), v.end(), z.row(i).begin());
  }
  if (!st.segment_blocks.empty()) {
    for (std::size_t i = 0; i < segments.size(); ++i) kernels::axpy(1.0, st.segment_position_embeddings.row(i), z.row(i));
    AttentionPattern pattern = AttentionPattern::full(segments.size());
    for (const auto& b : st.segment_blocks) {
      z = block_forward(b, z, pattern, cfg.attention.heads, cfg.layer_norm_eps, nullptr);
    }
  }
  return pool_rows(z, pooling, nullptr);
}

std::vector<double> logits(const Model& model, const ModelInput& input) { return model_forward(model, input, nullptr); }

LabelSet predict(const Model& model, const ModelInput& input) {
  return decide_labels(logits(model, input), model.config.task_kind);
}

LossResult forward_loss(const Model& model, std::span<const Example> batch) {
  if (batch.empty()) throw encoder_error("empty batch");
  LossResult r;
  r.logits = Matrix(batch.size(), model.config.num_labels);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto z = model_forward(model, batch[b].input, nullptr);
    std::copy(z.begin(), z.end(), r.logits.row(b).begin());
    r.loss += example_loss(model.config, z, batch[b].labels, nullptr);
  }
  r.loss /= static_cast<double>(batch.size());
  if (!std::isfinite(r.loss)) throw encoder_error("numerical divergence");
  return r;
}

LossResult forward_backward(const Model& model, std::span<const Example> batch, ModelState& grads) {
  if (batch.empty()) throw encoder_error("empty batch");
  LossResult r;
  r.logits = Matrix(batch.size(), model.config.num_labels);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> d_logits;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ForwardCache cache;
    auto z = model_forward(model, batch[b].input, &cache);
    std::copy(z.begin(), z.end(), r.logits.row(b).begin());
    r.loss += example_loss(model.config, z, batch[b].labels, &d_logits);
    for (double& g : d_logits) g *= inv_batch;
    model_backward(model, cache, d_logits, grads);
  }
  r.loss *= inv_batch;
  if (!std::isfinite(r.loss)) throw encoder_error("numerical divergence");
  return r;
}

ModelState backward(const Model& model, std::span<const Example> batch) {
  ModelState grads = model.state.zeros_like();
  forward_backward(model, batch, grads);
  return grads;
}

std::size_t activation_bytes(const Model& model, const ModelInput& input) {
  ForwardCache cache;
  model_forward(model, input, &cache);
  return cache.bytes();
}

}  // namespace longdoc
