#include "longdoc/warm_start.hpp"

#include <algorithm>

#include "longdoc/error.hpp"

namespace longdoc {
namespace {

Error warm_start_error(const std::string& msg) { return Error("warm_start", msg); }

}  // namespace

void ExtensionPlan::validate() const {
  if (source_positions < 1) throw warm_start_error("source positions must be >= 1");
  if (target_positions < source_positions) {
    throw warm_start_error("target length " + std::to_string(target_positions) + " is shorter than source length " +
                           std::to_string(source_positions));
  }
  if (window && *window % 2 != 0) throw warm_start_error("window width must be even");
}

Matrix clone_positional(const Matrix& source, std::size_t target_positions) {
  const std::size_t s = source.rows();
  if (s < 1) throw warm_start_error("source has no positions");
  if (target_positions < s) throw warm_start_error("target length shorter than source length");
  Matrix out(target_positions, source.cols());
  for (std::size_t p = 0; p < target_positions; ++p) {
    auto src = source.row(p % s);
    std::copy(src.begin(), src.end(), out.row(p).begin());
  }
  return out;
}

Model extend_model(const Model& source, const ExtensionPlan& plan) {
  plan.validate();
  if (source.config.max_positions != plan.source_positions) {
    throw warm_start_error("dimension mismatch: source model has " + std::to_string(source.config.max_positions) +
                           " positions, plan expects " + std::to_string(plan.source_positions));
  }
  if (!source.state.all_finite()) throw warm_start_error("source model contains non-finite values");
  check_state(source.config, source.state);

  Model target = source;
  auto& cfg = target.config;
  cfg.max_positions = plan.target_positions;
  if (plan.to_sparse) {
    if (cfg.variant == Variant::hierarchical) throw warm_start_error("cannot convert a hierarchical model to sparse");
    cfg.variant = Variant::flat_sparse;
  }
  if (plan.window) cfg = reconfigure_window(cfg, *plan.window);
  if (plan.global_mode) cfg.attention.global_mode = *plan.global_mode;

  target.state.position_embeddings = clone_positional(source.state.position_embeddings, plan.target_positions);
  if (plan.separate_global_projection && !cfg.attention.separate_global_projection) {
    cfg.attention.separate_global_projection = true;
    for (auto& b : target.state.blocks) {
      b.wq_global = b.wq;
      b.wk_global = b.wk;
      b.wv_global = b.wv;
      b.bq_global = b.bq;
      b.bk_global = b.bk;
      b.bv_global = b.bv;
    }
  }
  cfg.validate();
  check_state(cfg, target.state);
  return target;
}

EncoderConfig reconfigure_window(const EncoderConfig& config, std::size_t new_window) {
  if (new_window % 2 != 0) throw warm_start_error("window width must be even, got " + std::to_string(new_window));
  EncoderConfig out = config;
  out.attention.window = new_window;
  return out;
}

}  // namespace longdoc
