#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <algorithm>

#include "longdoc/encoder.hpp"
#include "longdoc/matrix.hpp"
#include "longdoc/rng.hpp"

namespace testing {

inline longdoc::Matrix random_matrix(std::size_t rows, std::size_t cols, longdoc::Rng& rng, double scale = 1.0) {
  longdoc::Matrix m(rows, cols);
  for (double& x : m.values()) x = scale * rng.normal();
  return m;
}

inline double max_abs_diff(const longdoc::Matrix& a, const longdoc::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("longdoc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small model for the given variant; weights drawn with a larger scale than
// the training init so that attention is far from uniform.
inline longdoc::EncoderConfig toy_config(longdoc::Variant variant, bool buckets = false, bool separate_global = false) {
  longdoc::EncoderConfig c;
  c.vocab_size = 12;
  c.attention.heads = 2;
  c.attention.head_dim = 3;
  c.attention.window = 2;
  c.attention.global_mode = longdoc::GlobalMode::cls_and_paragraph_sep;
  c.attention.separate_global_projection = separate_global;
  c.layers = 2;
  c.ff_dim = 5;
  c.max_positions = 10;
  c.variant = variant;
  c.use_tfidf_embeddings = buckets;
  c.buckets = buckets ? 3 : 0;
  c.num_labels = 3;
  c.max_segments = 3;
  c.segment_len = 6;
  c.segment_layers = 1;
  return c;
}

inline longdoc::Model toy_model(const longdoc::EncoderConfig& c, std::uint64_t seed, double scale = 0.5) {
  longdoc::Model m{c, longdoc::init_state(c, seed)};
  longdoc::Rng rng(seed + 1000);
  m.state.visit([&](const std::string& name, longdoc::Matrix& a) {
    const bool gain = name.find("_gain") != std::string::npos;
    for (double& x : a.values()) x = (gain ? 1.0 : 0.0) + scale * rng.normal();
  });
  return m;
}

// [CLS] followed by random word ids; with separators, a SEP closes every few tokens.
inline longdoc::SequenceInput random_sequence(const longdoc::EncoderConfig& c, std::size_t len, longdoc::Rng& rng,
                                              bool separators = true) {
  longdoc::SequenceInput s;
  s.tokens.push_back(longdoc::kCls);
  for (std::size_t i = 1; i < len; ++i) {
    if (separators && i % 4 == 0) {
      s.tokens.push_back(longdoc::kSep);
    } else {
      s.tokens.push_back(static_cast<longdoc::TokenId>(longdoc::kNumReserved + rng.index(c.vocab_size - longdoc::kNumReserved)));
    }
  }
  if (c.use_tfidf_embeddings) {
    for (std::size_t i = 0; i < len; ++i) {
      s.buckets.push_back(i == 0 ? -1 : static_cast<std::int32_t>(rng.index(c.buckets)));
    }
  }
  return s;
}

inline longdoc::Example random_example(const longdoc::EncoderConfig& c, longdoc::Rng& rng) {
  longdoc::Example ex;
  if (c.variant == longdoc::Variant::hierarchical) {
    const std::size_t n = 1 + rng.index(c.max_segments);
    for (std::size_t i = 0; i < n; ++i) ex.input.segments.push_back(random_sequence(c, 2 + rng.index(c.segment_len - 1), rng));
  } else {
    ex.input.segments.push_back(random_sequence(c, c.max_positions - rng.index(3), rng));
  }
  if (c.task_kind == longdoc::TaskKind::single_label) {
    ex.labels = {static_cast<longdoc::LabelId>(rng.index(c.num_labels))};
  } else {
    for (std::size_t l = 0; l < c.num_labels; ++l) {
      if (rng.uniform() < 0.5) ex.labels.push_back(static_cast<longdoc::LabelId>(l));
    }
  }
  return ex;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t arrays = 0;
  std::string worst;
};

// Central differences on sampled coordinates: at least one per array, the rest
// spread uniformly. The relative error uses max(|fd|, |analytic|, floor) as
// denominator so coordinates with vanishing gradient are judged absolutely.
inline GradCheckResult gradient_check(longdoc::Model model, const std::vector<longdoc::Example>& batch,
                                      std::size_t coordinates, longdoc::Rng& rng, double eps = 1e-5,
                                      double floor = 1e-6) {
  const longdoc::ModelState grads = longdoc::backward(model, batch);
  std::vector<std::pair<std::string, longdoc::Matrix*>> params;
  model.state.visit([&](const std::string& n, longdoc::Matrix& m) { params.emplace_back(n, &m); });
  std::vector<const longdoc::Matrix*> gs;
  grads.visit([&](const std::string&, const longdoc::Matrix& m) { gs.push_back(&m); });

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t a = 0; a < params.size(); ++a) picks.emplace_back(a, rng.index(params[a].second->size()));
  std::size_t total = 0;
  for (const auto& p : params) total += p.second->size();
  while (picks.size() < coordinates) {
    std::size_t flat = rng.index(total);
    std::size_t a = 0;
    while (flat >= params[a].second->size()) flat -= params[a++].second->size();
    picks.emplace_back(a, flat);
  }

  GradCheckResult r;
  r.arrays = params.size();
  for (auto [a, i] : picks) {
    double& x = params[a].second->values()[i];
    const double saved = x;
    x = saved + eps;
    const double up = longdoc::forward_loss(model, batch).loss;
    x = saved - eps;
    const double down = longdoc::forward_loss(model, batch).loss;
    x = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double an = gs[a]->values()[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst = params[a].first + "[" + std::to_string(i) + "]";
    }
    ++r.coordinates;
  }
  return r;
}

}  // namespace testing
