#pragma once

// Context extension of a trained encoder: positional-embedding cloning,
// global projections initialized from the local ones, and attention window
// reconfiguration. No values are invented: every target entry is a copy of a
// source entry.

#include <cstddef>
#include <optional>

#include "longdoc/encoder.hpp"

namespace longdoc {

struct ExtensionPlan {
  std::size_t source_positions = 512;
  std::size_t target_positions = 4096;
  std::optional<std::size_t> window;
  std::optional<GlobalMode> global_mode;
  // Switch a flat_dense source to sliding-window attention.
  bool to_sparse = false;
  // Give global rows their own projections, copied from the local ones.
  bool separate_global_projection = false;

  std::size_t clone_factor() const noexcept { return target_positions / source_positions; }
  void validate() const;
};

// out[p] = source[p mod S] for p in [0, T).
Matrix clone_positional(const Matrix& source, std::size_t target_positions);

Model extend_model(const Model& source, const ExtensionPlan& plan);

// New total window width; must be even.
EncoderConfig reconfigure_window(const EncoderConfig& config, std::size_t new_window);

}  // namespace longdoc
