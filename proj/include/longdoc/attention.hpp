#pragma once

// Multi-head scaled dot-product attention: a dense reference over an explicit
// n×n mask, and a sliding-window kernel with global tokens whose cost per
// non-global row is O(w + |globals|).
//
// Q, K and V are n × (heads·head_dim) matrices with heads laid out side by
// side. Both paths visit permitted keys in ascending position order and share
// the softmax/accumulate step, so for the same permitted set they agree bit
// for bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "longdoc/matrix.hpp"
#include "longdoc/text.hpp"

namespace longdoc {

enum class GlobalMode { cls_only, cls_and_paragraph_sep };

std::string_view to_string(GlobalMode mode);
GlobalMode parse_global_mode(std::string_view s);

struct AttentionConfig {
  std::size_t heads = 2;
  std::size_t head_dim = 16;
  // Total window width: floor(w/2) positions on each side plus self.
  std::size_t window = 512;
  GlobalMode global_mode = GlobalMode::cls_only;
  // Global rows use their own Q/K/V projections (initialized from the local ones).
  bool separate_global_projection = false;

  std::size_t model_dim() const noexcept { return heads * head_dim; }
  std::size_t half_window() const noexcept { return window / 2; }
  void validate() const;
};

// {0} plus, in paragraph mode, every SEP position. tokens[0] must be CLS.
std::vector<std::size_t> global_positions(std::span<const TokenId> tokens, GlobalMode mode);

class AttentionMask {
 public:
  explicit AttentionMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }

 private:
  std::size_t n_;
  std::vector<std::uint8_t> bits_;
};

// M[i][j] = |i-j| <= floor(w/2) or i in globals or j in globals.
AttentionMask build_attention_mask(std::size_t n, std::size_t window, std::span<const std::size_t> globals);

template <class T>
BasicMatrix<T> dense_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                               std::size_t heads, const AttentionMask& mask);

// Work counters from the sliding-window kernel.
struct AttentionStats {
  std::vector<std::size_t> keys_per_row;  // score evaluations per row and head
  std::size_t total_scores = 0;           // summed over rows and heads
};

template <class T>
BasicMatrix<T> sliding_window_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                        const AttentionConfig& config, std::span<const std::size_t> globals,
                                        AttentionStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Differentiable form used inside the encoder.

// Keys visible to each row: every position (full), or a band of half-width
// floor(w/2) plus the global positions; global rows see every position.
class AttentionPattern {
 public:
  static AttentionPattern full(std::size_t n);
  static AttentionPattern banded(std::size_t n, std::size_t window, std::vector<std::size_t> globals);

  std::size_t size() const noexcept { return n_; }
  bool is_full() const noexcept { return full_; }
  bool is_global(std::size_t row) const { return !full_ && is_global_[row] != 0; }
  const std::vector<std::size_t>& globals() const noexcept { return globals_; }
  // Ascending key positions for `row`, written into `out`.
  void keys(std::size_t row, std::vector<std::uint32_t>& out) const;

 private:
  std::size_t n_ = 0;
  bool full_ = true;
  std::size_t half_ = 0;
  std::vector<std::size_t> globals_;
  std::vector<std::uint8_t> is_global_;
};

struct AttentionInputs {
  const Matrix* q = nullptr;
  const Matrix* k = nullptr;
  const Matrix* v = nullptr;
  // Optional separate projections; global rows attend with (qg, kg, vg).
  const Matrix* qg = nullptr;
  const Matrix* kg = nullptr;
  const Matrix* vg = nullptr;

  bool has_global() const noexcept { return qg != nullptr; }
};

struct AttentionGrads {
  Matrix* q = nullptr;
  Matrix* k = nullptr;
  Matrix* v = nullptr;
  Matrix* qg = nullptr;
  Matrix* kg = nullptr;
  Matrix* vg = nullptr;
};

struct AttentionCache {
  std::vector<std::size_t> row_offset;  // n + 1 entries into keys
  std::vector<std::uint32_t> keys;
  std::vector<double> probs;  // (row_offset[i] + idx) * heads + h

  std::size_t bytes() const noexcept {
    return row_offset.size() * sizeof(std::size_t) + keys.size() * sizeof(std::uint32_t) +
           probs.size() * sizeof(double);
  }
};

Matrix attention_forward(const AttentionPattern& pattern, const AttentionInputs& in, std::size_t heads,
                         AttentionCache* cache = nullptr, AttentionStats* stats = nullptr);

// Accumulates into the matrices of `grads` (which must be pre-sized).
void attention_backward(const AttentionPattern& pattern, const AttentionInputs& in, std::size_t heads,
                        const AttentionCache& cache, const Matrix& d_out, const AttentionGrads& grads);

}  // namespace longdoc
