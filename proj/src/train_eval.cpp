#include "longdoc/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "longdoc/error.hpp"
#include "longdoc/rng.hpp"

namespace longdoc {
namespace {

Error train_error(const std::string& msg) { return Error("train_eval", msg); }

std::vector<Matrix*> arrays_of(ModelState& s) {
  std::vector<Matrix*> out;
  s.visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> arrays_of(const ModelState& s) {
  std::vector<const Matrix*> out;
  s.visit([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

double safe_f1(double tp, double fp, double fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (patience < 1) throw train_error("patience must be >= 1");
  if (max_epochs < 1) throw train_error("max_epochs must be >= 1");
  if (batch_size < 1) throw train_error("batch_size must be >= 1");
  if (seeds.empty()) throw train_error("at least one seed is required");
  if (!(adam.learning_rate > 0.0)) throw train_error("learning rate must be > 0");
}

AdamState AdamState::for_state(const ModelState& params) {
  return AdamState{params.zeros_like(), params.zeros_like()};
}

void optimizer_step(ModelState& params, const ModelState& grads, AdamState& moments, std::size_t step,
                    const AdamConfig& cfg) {
  if (step < 1) throw train_error("optimizer step index starts at 1");
  auto p = arrays_of(params);
  auto g = arrays_of(grads);
  auto m = arrays_of(moments.first_moment);
  auto v = arrays_of(moments.second_moment);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw train_error("gradient structure does not match parameters");
  }
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (!p[a]->same_shape(*g[a]) || !p[a]->same_shape(*m[a])) throw train_error("gradient shape mismatch");
    for (double x : g[a]->values()) {
      if (!std::isfinite(x)) throw train_error("divergence at step " + std::to_string(step));
    }
  }
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t a = 0; a < p.size(); ++a) {
    auto pv = p[a]->values();
    auto gv = g[a]->values();
    auto mv = m[a]->values();
    auto vv = v[a]->values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
      const double m_hat = mv[i] / correction1;
      const double v_hat = vv[i] / correction2;
      pv[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

F1Scores f1_scores(std::span<const LabelSet> gold, std::span<const LabelSet> pred, std::size_t num_labels) {
  if (gold.size() != pred.size()) {
    throw train_error("gold/prediction length mismatch (" + std::to_string(gold.size()) + " vs " +
                      std::to_string(pred.size()) + ")");
  }
  std::vector<double> tp(num_labels, 0.0), fp(num_labels, 0.0), fn(num_labels, 0.0);
  auto check = [&](LabelId l) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_labels) throw train_error("label id outside the label universe");
    return static_cast<std::size_t>(l);
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& g = gold[i];
    const auto& p = pred[i];
    for (LabelId l : p) {
      if (std::binary_search(g.begin(), g.end(), l)) tp[check(l)] += 1.0;
      else fp[check(l)] += 1.0;
    }
    for (LabelId l : g) {
      if (!std::binary_search(p.begin(), p.end(), l)) fn[check(l)] += 1.0;
    }
  }
  F1Scores s;
  double macro = 0.0;
  for (std::size_t l = 0; l < num_labels; ++l) macro += safe_f1(tp[l], fp[l], fn[l]);
  s.macro = num_labels > 0 ? macro / static_cast<double>(num_labels) : 0.0;
  s.micro = safe_f1(std::accumulate(tp.begin(), tp.end(), 0.0), std::accumulate(fp.begin(), fp.end(), 0.0),
                    std::accumulate(fn.begin(), fn.end(), 0.0));
  return s;
}

double harmonic_mean(std::span<const double> scores) {
  if (scores.empty()) throw train_error("harmonic mean of an empty list");
  double inv = 0.0;
  for (double s : scores) {
    if (!(s > 0.0)) throw train_error("harmonic mean needs scores > 0");
    inv += 1.0 / s;
  }
  return static_cast<double>(scores.size()) / inv;
}

bool EarlyStopping::record(double score) {
  ++epochs_;
  if (score > best_) {
    best_ = score;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

F1Scores evaluate(const Model& model, std::span<const Example> data) {
  std::vector<LabelSet> gold, pred;
  gold.reserve(data.size());
  pred.reserve(data.size());
  for (const auto& ex : data) {
    gold.push_back(ex.labels);
    pred.push_back(predict(model, ex.input));
  }
  return f1_scores(gold, pred, model.config.num_labels);
}

TrainResult train_loop(Model model, std::span<const Example> train, std::span<const Example> dev,
                       const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw train_error("training and dev splits must be non-empty");
  TrainResult result;
  result.seed = seed;
  result.best = model;
  AdamState moments = AdamState::for_state(model.state);
  EarlyStopping stopper(cfg.patience);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(train[order[i]]);
      ModelState grads = model.state.zeros_like();
      loss_sum += forward_backward(model, batch, grads).loss;
      ++batches;
      optimizer_step(model.state, grads, moments, ++step, cfg.adam);
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(batches));
    const double dev_micro = evaluate(model, dev).micro;
    result.dev_history.push_back(dev_micro);
    result.epochs_run = epoch;
    if (stopper.record(dev_micro)) result.best = model;
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  return result;
}

TrainResult train_multi_seed(const std::function<Model(std::uint64_t)>& make_model, std::span<const Example> train,
                             std::span<const Example> dev, const TrainConfig& cfg) {
  cfg.validate();
  std::optional<TrainResult> best;
  double best_score = -1.0;
  for (std::uint64_t seed : cfg.seeds) {
    TrainResult r = train_loop(make_model(seed), train, dev, cfg, seed);
    const double score = r.dev_history[r.best_epoch - 1];
    if (!best || score > best_score) {
      best_score = score;
      best = std::move(r);
    }
  }
  return std::move(*best);
}

void EvalReport::validate() const {
  for (const auto& [name, s] : splits) {
    if (s.micro < 0.0 || s.micro > 1.0 || s.macro < 0.0 || s.macro > 1.0) {
      throw train_error("score outside [0, 1] in split '" + name + "'");
    }
  }
  if (epochs_run > 0 && chosen_epoch > epochs_run) throw train_error("chosen epoch beyond epochs run");
}

double median_seconds_per_sample(const std::function<void()>& run_all, std::size_t samples, std::size_t repeats) {
  if (repeats < 3) throw train_error("benchmark needs at least 3 repeats");
  if (samples == 0) throw train_error("benchmark needs at least one sample");
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run_all();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const double median = repeats % 2 == 1 ? times[repeats / 2] : 0.5 * (times[repeats / 2 - 1] + times[repeats / 2]);
  return median / static_cast<double>(samples);
}

BenchmarkResult benchmark(const Model& model, std::span<const ModelInput> inputs, std::size_t repeats) {
  BenchmarkResult r;
  r.parameter_count = model.state.parameter_count();
  volatile double sink = 0.0;
  r.seconds_per_sample = median_seconds_per_sample(
      [&] {
        for (const auto& in : inputs) sink = sink + logits(model, in)[0];
      },
      inputs.size(), repeats);
  for (const auto& in : inputs) r.activation_bytes_per_sample = std::max(r.activation_bytes_per_sample, activation_bytes(model, in));
  return r;
}

AttentionTiming time_attention(std::size_t n, const AttentionConfig& config, std::size_t repeats, std::uint64_t seed) {
  if (n == 0) throw train_error("attention benchmark needs n >= 1");
  Rng rng(seed);
  const std::size_t d = config.model_dim();
  auto random = [&] {
    Matrix m(n, d);
    for (double& x : m.values()) x = rng.normal();
    return m;
  };
  const Matrix q = random(), k = random(), v = random();
  const std::vector<std::size_t> globals{0};
  const AttentionMask mask = build_attention_mask(n, config.window, globals);
  volatile double sink = 0.0;
  AttentionTiming t;
  t.n = n;
  t.dense_seconds = median_seconds_per_sample(
      [&] { sink = sink + dense_attention(q, k, v, config.heads, mask)(n - 1, 0); }, 1, repeats);
  t.sparse_seconds = median_seconds_per_sample(
      [&] { sink = sink + sliding_window_attention(q, k, v, config, globals)(n - 1, 0); }, 1, repeats);
  return t;
}

GridResult grid_search(std::span<const std::size_t> values,
                       const std::function<EvalReport(std::size_t)>& train_and_report) {
  if (values.empty()) throw train_error("empty grid");
  GridResult g;
  double best = -1.0;
  bool have = false;
  for (std::size_t v : values) {
    EvalReport rep = train_and_report(v);
    const auto it = rep.splits.find("dev");
    if (it == rep.splits.end()) throw train_error("grid report lacks dev scores");
    const double score = it->second.micro;
    if (!have || score > best || (score == best && v < g.best_value)) {
      best = score;
      g.best_value = v;
      have = true;
    }
    g.reports.emplace_back(v, std::move(rep));
  }
  return g;
}

}  // namespace longdoc
