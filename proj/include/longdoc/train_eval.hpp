#pragma once

// Fine-tuning with Adam and early stopping on dev micro-F1, the multi-seed
// protocol, F1 metrics, harmonic-mean aggregation and timing.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longdoc/encoder.hpp"

namespace longdoc {

struct AdamConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  AdamConfig adam{};
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::size_t batch_size = 8;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> bucket_grid{16, 32, 64, 128};
  std::vector<std::size_t> top_k_grid{20000, 30000, 40000};

  void validate() const;
};

struct AdamState {
  ModelState first_moment;
  ModelState second_moment;

  static AdamState for_state(const ModelState& params);
};

// One Adam update with bias correction; `step` counts from 1.
void optimizer_step(ModelState& params, const ModelState& grads, AdamState& moments, std::size_t step,
                    const AdamConfig& cfg);

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;

  friend bool operator==(const F1Scores&, const F1Scores&) = default;
};

// Micro-F1 over pooled TP/FP/FN; macro-F1 as the unweighted mean of per-class
// F1 over labels [0, num_labels). A class with a zero denominator scores 0.
F1Scores f1_scores(std::span<const LabelSet> gold, std::span<const LabelSet> pred, std::size_t num_labels);

// n / sum(1 / s_i); every score must be > 0.
double harmonic_mean(std::span<const double> scores);

// Stops once `patience` consecutive epochs bring no strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records the dev score of the next epoch; returns true if it is the new best.
  bool record(double score);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  // 1-based epoch of the best score (0 before any record).
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_score() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -1.0;
};

F1Scores evaluate(const Model& model, std::span<const Example> data);

struct TrainResult {
  Model best;
  std::vector<double> dev_history;  // dev micro-F1 per epoch
  std::vector<double> train_loss;   // mean training loss per epoch
  std::size_t best_epoch = 0;       // 1-based
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
};

// Shuffles with `seed`, steps Adam per minibatch, evaluates dev micro-F1 after
// every epoch and returns the state of the best epoch.
TrainResult train_loop(Model model, std::span<const Example> train, std::span<const Example> dev,
                       const TrainConfig& cfg, std::uint64_t seed);

// Runs train_loop once per seed (model built by make_model(seed)) and keeps
// the run with the best dev micro-F1; ties go to the earlier seed.
TrainResult train_multi_seed(const std::function<Model(std::uint64_t)>& make_model, std::span<const Example> train,
                             std::span<const Example> dev, const TrainConfig& cfg);

struct EvalReport {
  std::string model;
  std::string task;
  std::uint64_t seed = 0;
  std::map<std::string, F1Scores> splits;
  std::vector<double> dev_history;
  std::size_t chosen_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t parameter_count = 0;
  std::optional<double> seconds_per_sample;
  std::optional<std::size_t> activation_bytes_per_sample;
  std::map<std::string, std::string> settings;

  void validate() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct BenchmarkResult {
  double seconds_per_sample = 0.0;  // median over repeats
  std::size_t parameter_count = 0;
  std::size_t activation_bytes_per_sample = 0;  // largest over the inputs
  std::vector<double> repeat_seconds;
};

// Median wall time of run_all() divided by `samples`.
double median_seconds_per_sample(const std::function<void()>& run_all, std::size_t samples, std::size_t repeats);

BenchmarkResult benchmark(const Model& model, std::span<const ModelInput> inputs, std::size_t repeats);

struct AttentionTiming {
  std::size_t n = 0;
  double dense_seconds = 0.0;   // median, dense kernel over the banded mask
  double sparse_seconds = 0.0;  // median, sliding-window kernel
};

// Times both attention kernels on random n × (heads·head_dim) inputs with the
// CLS-only global set. Mask construction is not timed.
AttentionTiming time_attention(std::size_t n, const AttentionConfig& config, std::size_t repeats, std::uint64_t seed);

struct GridResult {
  std::size_t best_value = 0;
  std::vector<std::pair<std::size_t, EvalReport>> reports;
};

// Trains one model per grid value; the best dev micro-F1 wins, ties go to the
// smallest value.
GridResult grid_search(std::span<const std::size_t> values,
                       const std::function<EvalReport(std::size_t)>& train_and_report);

}  // namespace longdoc
