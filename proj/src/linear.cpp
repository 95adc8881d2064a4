#include "longdoc/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longdoc/error.hpp"
#include "longdoc/rng.hpp"

namespace longdoc {
namespace {

Error linear_error(const std::string& msg) { return Error("linear_baseline", msg); }

double sparse_dot(std::span<const double> w, const SparseVector& x) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.nnz(); ++k) acc += w[x.indices[k]] * x.values[k];
  return acc;
}

bool has_label(const LabelSet& s, LabelId l) { return std::binary_search(s.begin(), s.end(), l); }

}  // namespace

LinearTrainResult train_linear(std::span<const SparseVector> features, std::span<const LabelSet> labels,
                               const TaskSpec& task, const LinearOptions& options) {
  if (features.size() != labels.size()) throw linear_error("feature/label count mismatch");
  if (features.empty()) throw linear_error("empty training set");
  if (!(options.reg > 0.0)) throw linear_error("regularization constant must be > 0");
  const std::size_t dim = features.front().dim;
  const std::size_t n_labels = task.num_labels();
  for (const auto& x : features) {
    if (x.dim != dim) throw linear_error("inconsistent feature dimensions");
  }
  std::vector<std::size_t> support(n_labels, 0);
  for (const auto& ls : labels) {
    for (LabelId l : ls) {
      if (l < 0 || static_cast<std::size_t>(l) >= n_labels) throw linear_error("label id out of range");
      ++support[static_cast<std::size_t>(l)];
    }
  }
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (support[l] == 0) throw linear_error("label '" + task.labels[l] + "' absent from training data");
  }

  const std::size_t m = features.size();
  const double lambda = 1.0 / (options.reg * static_cast<double>(m));

  LinearTrainResult result;
  LinearModel& model = result.model;
  model.task_kind = task.kind;
  model.reg = options.reg;
  model.weights = Matrix(n_labels, dim);
  model.bias.assign(n_labels, 0.0);

  // w_true = wscale[l] * weights.row(l), so the shrink step is O(1).
  std::vector<double> wscale(n_labels, 1.0);
  auto renormalize = [&](std::size_t l) {
    if (wscale[l] == 1.0) return;
    for (double& v : model.weights.row(l)) v *= wscale[l];
    wscale[l] = 1.0;
  };

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  double t = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& x = features[idx];
      const double eta = options.eta0 / (1.0 + lambda * t);
      for (std::size_t l = 0; l < n_labels; ++l) {
        auto w = model.weights.row(l);
        const double y = has_label(labels[idx], static_cast<LabelId>(l)) ? 1.0 : -1.0;
        const double margin = y * (wscale[l] * sparse_dot(w, x) + model.bias[l]);
        wscale[l] *= 1.0 - eta * lambda;
        if (margin < 1.0) {
          const double step = eta * y / wscale[l];
          for (std::size_t k = 0; k < x.nnz(); ++k) w[x.indices[k]] += step * x.values[k];
          model.bias[l] += eta * y;
        }
        if (wscale[l] < 1e-9) renormalize(l);
      }
      t += 1.0;
    }
    for (std::size_t l = 0; l < n_labels; ++l) renormalize(l);
    result.objective.push_back(hinge_objective(model, features, labels));
  }
  return result;
}

std::vector<double> linear_scores(const LinearModel& model, const SparseVector& x) {
  if (x.dim != model.dim()) {
    throw linear_error("feature dimension " + std::to_string(x.dim) + " does not match model dimension " +
                       std::to_string(model.dim()));
  }
  std::vector<double> scores(model.num_labels());
  for (std::size_t l = 0; l < scores.size(); ++l) scores[l] = sparse_dot(model.weights.row(l), x) + model.bias[l];
  return scores;
}

LabelSet decide_labels(std::span<const double> scores, TaskKind kind) {
  LabelSet out;
  if (scores.empty()) return out;
  if (kind == TaskKind::single_label) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < scores.size(); ++l) {
      if (scores[l] > scores[best]) best = l;
    }
    out.push_back(static_cast<LabelId>(best));
  } else {
    for (std::size_t l = 0; l < scores.size(); ++l) {
      if (scores[l] > 0.0) out.push_back(static_cast<LabelId>(l));
    }
  }
  return out;
}

LabelSet predict_linear(const LinearModel& model, const SparseVector& x) {
  return decide_labels(linear_scores(model, x), model.task_kind);
}

double hinge_objective(const LinearModel& model, std::span<const SparseVector> features,
                       std::span<const LabelSet> labels) {
  const double lambda = 1.0 / (model.reg * static_cast<double>(features.size()));
  double total = 0.0;
  for (std::size_t l = 0; l < model.num_labels(); ++l) {
    auto w = model.weights.row(l);
    double sq = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const double y = has_label(labels[i], static_cast<LabelId>(l)) ? 1.0 : -1.0;
      loss += std::max(0.0, 1.0 - y * (sparse_dot(w, features[i]) + model.bias[l]));
    }
    total += 0.5 * lambda * sq + loss / static_cast<double>(features.size());
  }
  return total;
}

void l2_normalize(SparseVector& v) {
  double sq = 0.0;
  for (double x : v.values) sq += x * x;
  if (sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v.values) x *= inv;
}

}  // namespace longdoc
