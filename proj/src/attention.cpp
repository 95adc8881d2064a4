#include "longdoc/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longdoc/error.hpp"
#include "longdoc/kernels.hpp"

namespace longdoc {
namespace {

Error attention_error(const std::string& msg) { return Error("attention", msg); }

template <class T>
void check_shapes(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v, std::size_t heads) {
  if (heads == 0) throw attention_error("head count must be >= 1");
  if (!q.same_shape(k) || !q.same_shape(v)) throw attention_error("Q, K and V must have the same shape");
  if (q.cols() % heads != 0) throw attention_error("model dimension not divisible by head count");
}

// Turns `scores` into softmax weights in place and writes sum_j p_j v_j into
// `out`. Keys are visited in the given (ascending) order.
template <class T>
void softmax_accumulate(std::span<T> scores, std::span<const std::uint32_t> keys, const BasicMatrix<T>& v,
                        std::size_t col0, std::size_t head_dim, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T s : scores) mx = std::max(mx, s);
  T sum = 0;
  for (T& s : scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (T& s : scores) s /= sum;
  std::fill(out.begin(), out.end(), T{0});
  for (std::size_t idx = 0; idx < keys.size(); ++idx) {
    kernels::axpy(scores[idx], v.row(keys[idx]).subspan(col0, head_dim), out);
  }
}

template <class T>
T score(const BasicMatrix<T>& q, const BasicMatrix<T>& k, std::size_t i, std::size_t j, std::size_t col0,
        std::size_t head_dim, T scale) {
  return kernels::dot(q.row(i).subspan(col0, head_dim), k.row(j).subspan(col0, head_dim)) * scale;
}

}  // namespace

std::string_view to_string(GlobalMode mode) {
  return mode == GlobalMode::cls_only ? "cls" : "par";
}

GlobalMode parse_global_mode(std::string_view s) {
  if (s == "cls" || s == "cls_only") return GlobalMode::cls_only;
  if (s == "par" || s == "cls_and_paragraph_sep") return GlobalMode::cls_and_paragraph_sep;
  throw attention_error("unknown global mode '" + std::string(s) + "'");
}

void AttentionConfig::validate() const {
  if (heads < 1) throw attention_error("head count must be >= 1");
  if (head_dim < 1) throw attention_error("head_dim must be >= 1");
  if (window % 2 != 0) throw attention_error("window width must be even, got " + std::to_string(window));
}

std::vector<std::size_t> global_positions(std::span<const TokenId> tokens, GlobalMode mode) {
  if (tokens.empty() || tokens.front() != kCls) throw attention_error("sequence must begin with CLS");
  std::vector<std::size_t> out{0};
  if (mode == GlobalMode::cls_and_paragraph_sep) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      if (tokens[i] == kSep) out.push_back(i);
    }
  }
  return out;
}

AttentionMask build_attention_mask(std::size_t n, std::size_t window, std::span<const std::size_t> globals) {
  std::vector<std::uint8_t> is_global(n, 0);
  for (std::size_t g : globals) {
    if (g >= n) throw attention_error("global position " + std::to_string(g) + " outside sequence");
    is_global[g] = 1;
  }
  const std::size_t half = window / 2;
  AttentionMask mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t dist = i > j ? i - j : j - i;
      mask.set(i, j, dist <= half || is_global[i] || is_global[j]);
    }
  }
  return mask;
}

template <class T>
BasicMatrix<T> dense_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                               std::size_t heads, const AttentionMask& mask) {
  check_shapes(q, k, v, heads);
  const std::size_t n = q.rows();
  if (mask.size() != n) throw attention_error("mask size does not match sequence length");
  const std::size_t head_dim = q.cols() / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(head_dim));

  BasicMatrix<T> out(n, q.cols());
  std::vector<T> full(n);
  std::vector<T> allowed_scores;
  std::vector<std::uint32_t> allowed;
  allowed.reserve(n);
  allowed_scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    allowed.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j)) allowed.push_back(static_cast<std::uint32_t>(j));
    }
    if (allowed.empty()) throw attention_error("row " + std::to_string(i) + " has every key masked");
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col0 = h * head_dim;
      // Full score row, as a dense implementation would compute it.
      for (std::size_t j = 0; j < n; ++j) full[j] = score(q, k, i, j, col0, head_dim, scale);
      allowed_scores.clear();
      for (auto j : allowed) allowed_scores.push_back(full[j]);
      softmax_accumulate<T>(allowed_scores, allowed, v, col0, head_dim, out.row(i).subspan(col0, head_dim));
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> sliding_window_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                        const AttentionConfig& config, std::span<const std::size_t> globals,
                                        AttentionStats* stats) {
  check_shapes(q, k, v, config.heads);
  const std::size_t n = q.rows();
  const auto pattern =
      AttentionPattern::banded(n, config.window, std::vector<std::size_t>(globals.begin(), globals.end()));
  const std::size_t heads = config.heads;
  const std::size_t head_dim = q.cols() / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(head_dim));

  if (stats != nullptr) {
    stats->keys_per_row.assign(n, 0);
    stats->total_scores = 0;
  }
  BasicMatrix<T> out(n, q.cols());
  std::vector<std::uint32_t> keys;
  std::vector<T> scores;
  for (std::size_t i = 0; i < n; ++i) {
    pattern.keys(i, keys);
    scores.resize(keys.size());
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col0 = h * head_dim;
      for (std::size_t idx = 0; idx < keys.size(); ++idx) scores[idx] = score(q, k, i, keys[idx], col0, head_dim, scale);
      softmax_accumulate<T>(scores, keys, v, col0, head_dim, out.row(i).subspan(col0, head_dim));
    }
    if (stats != nullptr) {
      stats->keys_per_row[i] = keys.size();
      stats->total_scores += keys.size() * heads;
    }
  }
  return out;
}

template MatrixF dense_attention<float>(const MatrixF&, const MatrixF&, const MatrixF&, std::size_t,
                                        const AttentionMask&);
template Matrix dense_attention<double>(const Matrix&, const Matrix&, const Matrix&, std::size_t,
                                        const AttentionMask&);
template MatrixF sliding_window_attention<float>(const MatrixF&, const MatrixF&, const MatrixF&,
                                                 const AttentionConfig&, std::span<const std::size_t>,
                                                 AttentionStats*);
template Matrix sliding_window_attention<double>(const Matrix&, const Matrix&, const Matrix&,
                                                 const AttentionConfig&, std::span<const std::size_t>,
                                                 AttentionStats*);

AttentionPattern AttentionPattern::full(std::size_t n) {
  AttentionPattern p;
  p.n_ = n;
  p.full_ = true;
  return p;
}

AttentionPattern AttentionPattern::banded(std::size_t n, std::size_t window, std::vector<std::size_t> globals) {
  AttentionPattern p;
  p.n_ = n;
  p.full_ = false;
  p.half_ = window / 2;
  p.is_global_.assign(n, 0);
  for (std::size_t g : globals) {
    if (g >= n) throw attention_error("global position " + std::to_string(g) + " outside sequence");
    p.is_global_[g] = 1;
  }
  std::sort(globals.begin(), globals.end());
  globals.erase(std::unique(globals.begin(), globals.end()), globals.end());
  p.globals_ = std::move(globals);
  return p;
}

void AttentionPattern::keys(std::size_t row, std::vector<std::uint32_t>& out) const {
  out.clear();
  if (full_ || is_global_[row]) {
    out.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) out[j] = static_cast<std::uint32_t>(j);
    return;
  }
  const std::size_t lo = row > half_ ? row - half_ : 0;
  const std::size_t hi = std::min(n_ - 1, row + half_);
  auto g = globals_.begin();
  for (; g != globals_.end() && *g < lo; ++g) out.push_back(static_cast<std::uint32_t>(*g));
  for (std::size_t j = lo; j <= hi; ++j) out.push_back(static_cast<std::uint32_t>(j));
  for (; g != globals_.end(); ++g) {
    if (*g > hi) out.push_back(static_cast<std::uint32_t>(*g));
  }
}

Matrix attention_forward(const AttentionPattern& pattern, const AttentionInputs& in, std::size_t heads,
                         AttentionCache* cache, AttentionStats* stats) {
  check_shapes(*in.q, *in.k, *in.v, heads);
  if (in.has_global()) check_shapes(*in.qg, *in.kg, *in.vg, heads);
  const std::size_t n = in.q->rows();
  if (pattern.size() != n) throw attention_error("pattern size does not match sequence length");
  const std::size_t head_dim = in.q->cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  if (cache != nullptr) {
    cache->row_offset.assign(1, 0);
    cache->keys.clear();
    cache->probs.clear();
  }
  if (stats != nullptr) {
    stats->keys_per_row.assign(n, 0);
    stats->total_scores = 0;
  }
  Matrix out(n, in.q->cols());
  std::vector<std::uint32_t> keys;
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    pattern.keys(i, keys);
    const bool global_row = in.has_global() && pattern.is_global(i);
    const Matrix& q = global_row ? *in.qg : *in.q;
    const Matrix& k = global_row ? *in.kg : *in.k;
    const Matrix& v = global_row ? *in.vg : *in.v;
    scores.resize(keys.size());
    const std::size_t base = cache != nullptr ? cache->probs.size() : 0;
    if (cache != nullptr) {
      cache->keys.insert(cache->keys.end(), keys.begin(), keys.end());
      cache->row_offset.push_back(cache->keys.size());
      cache->probs.resize(base + keys.size() * heads);
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col0 = h * head_dim;
      for (std::size_t idx = 0; idx < keys.size(); ++idx) scores[idx] = score(q, k, i, keys[idx], col0, head_dim, scale);
      softmax_accumulate<double>(scores, keys, v, col0, head_dim, out.row(i).subspan(col0, head_dim));
      if (cache != nullptr) {
        for (std::size_t idx = 0; idx < keys.size(); ++idx) cache->probs[base + idx * heads + h] = scores[idx];
      }
    }
    if (stats != nullptr) {
      stats->keys_per_row[i] = keys.size();
      stats->total_scores += keys.size() * heads;
    }
  }
  return out;
}

void attention_backward(const AttentionPattern& pattern, const AttentionInputs& in, std::size_t heads,
                        const AttentionCache& cache, const Matrix& d_out, const AttentionGrads& grads) {
  const std::size_t n = in.q->rows();
  const std::size_t head_dim = in.q->cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<double> dp;
  for (std::size_t i = 0; i < n; ++i) {
    const bool global_row = in.has_global() && pattern.is_global(i);
    const Matrix& q = global_row ? *in.qg : *in.q;
    const Matrix& k = global_row ? *in.kg : *in.k;
    const Matrix& v = global_row ? *in.vg : *in.v;
    Matrix& dq = global_row ? *grads.qg : *grads.q;
    Matrix& dk = global_row ? *grads.kg : *grads.k;
    Matrix& dv = global_row ? *grads.vg : *grads.v;
    const std::size_t begin = cache.row_offset[i];
    const std::size_t count = cache.row_offset[i + 1] - begin;
    const std::uint32_t* keys = cache.keys.data() + begin;
    const double* probs = cache.probs.data() + begin * heads;
    dp.resize(count);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col0 = h * head_dim;
      auto go = d_out.row(i).subspan(col0, head_dim);
      double weighted = 0.0;
      for (std::size_t idx = 0; idx < count; ++idx) {
        const double p = probs[idx * heads + h];
        dp[idx] = kernels::dot(go, v.row(keys[idx]).subspan(col0, head_dim));
        weighted += p * dp[idx];
        kernels::axpy(p, go, dv.row(keys[idx]).subspan(col0, head_dim));
      }
      auto qi = q.row(i).subspan(col0, head_dim);
      auto dqi = dq.row(i).subspan(col0, head_dim);
      for (std::size_t idx = 0; idx < count; ++idx) {
        const double ds = probs[idx * heads + h] * (dp[idx] - weighted) * scale;
        kernels::axpy(ds, k.row(keys[idx]).subspan(col0, head_dim), dqi);
        kernels::axpy(ds, qi, dk.row(keys[idx]).subspan(col0, head_dim));
      }
    }
  }
}

}  // namespace longdoc
