#pragma once

// One-vs-rest linear max-margin classifier over sparse TF-IDF vectors.

#include <cstdint>
#include <span>
#include <vector>

#include "longdoc/matrix.hpp"
#include "longdoc/text.hpp"
#include "longdoc/tfidf.hpp"

namespace longdoc {

struct LinearModel {
  TaskKind task_kind = TaskKind::single_label;
  double reg = 1.0;
  Matrix weights;  // labels × features
  std::vector<double> bias;

  std::size_t num_labels() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }
};

struct LinearOptions {
  // SVM-style constant C; the L2 strength is lambda = 1 / (C * examples).
  double reg = 1.0;
  std::size_t epochs = 15;
  std::uint64_t seed = 0;
  // Step size eta_t = eta0 / (1 + lambda * t), t counting updates.
  double eta0 = 1.0;
};

struct LinearTrainResult {
  LinearModel model;
  // Regularized hinge objective (summed over labels) after each epoch.
  std::vector<double> objective;
};

LinearTrainResult train_linear(std::span<const SparseVector> features, std::span<const LabelSet> labels,
                               const TaskSpec& task, const LinearOptions& options);

std::vector<double> linear_scores(const LinearModel& model, const SparseVector& x);
// single_label: argmax, ties to the lowest id. multi_label: every score > 0.
LabelSet decide_labels(std::span<const double> scores, TaskKind kind);
LabelSet predict_linear(const LinearModel& model, const SparseVector& x);

double hinge_objective(const LinearModel& model, std::span<const SparseVector> features,
                       std::span<const LabelSet> labels);

// Unit L2 norm; all-zero vectors are left unchanged.
void l2_normalize(SparseVector& v);

}  // namespace longdoc
