#include "longdoc/serialization.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "longdoc/error.hpp"

namespace longdoc {
namespace {

using json = nlohmann::ordered_json;

Error io_error(const std::string& msg) { return Error("serialization", msg); }

json header(const std::string& format) { return json{{"format", format}, {"version", kFormatVersion}}; }

void check_header(const json& j, const std::string& format) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    throw io_error("not a " + format + " file");
  }
  if (!j.contains("version") || j["version"] != kFormatVersion) {
    throw io_error(format + " version " + (j.contains("version") ? j["version"].dump() : std::string("missing")) +
                   " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
}

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw io_error("malformed " + what + ": " + e.what());
  }
}

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw io_error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw io_error(std::string("field '") + key + "' has the wrong type");
  }
}

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (double v : m.values()) data.push_back(v);
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Matrix matrix_from(const json& j, const std::string& name) {
  const auto shape = get<std::vector<std::size_t>>(j, "shape");
  const auto data = get<std::vector<double>>(j, "data");
  if (shape.size() != 2 || shape[0] * shape[1] != data.size()) throw io_error("array '" + name + "' has a bad shape");
  Matrix m(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

json task_json(const TaskSpec& t) {
  return json{{"kind", std::string(to_string(t.kind))}, {"labels", t.labels}, {"max_input_length", t.max_input_length}};
}

TaskSpec task_from(const json& j) {
  TaskSpec t;
  t.kind = parse_task_kind(get<std::string>(j, "kind"));
  t.labels = get<std::vector<std::string>>(j, "labels");
  if (j.contains("max_input_length")) t.max_input_length = get<std::size_t>(j, "max_input_length");
  t.validate();
  return t;
}

json tfidf_json(const TfidfModel& m) {
  return json{{"num_docs", m.num_docs()},
              {"n_max", m.n_max()},
              {"sublinear", m.sublinear()},
              {"features", m.features()},
              {"doc_freq", m.doc_freqs()}};
}

TfidfModel tfidf_from(const json& j) {
  return TfidfModel(get<std::size_t>(j, "num_docs"), get<std::size_t>(j, "n_max"), get<bool>(j, "sublinear"),
                    get<std::vector<Ngram>>(j, "features"), get<std::vector<std::size_t>>(j, "doc_freq"));
}

json encoder_config_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"heads", c.attention.heads},
              {"head_dim", c.attention.head_dim},
              {"window", c.attention.window},
              {"global_mode", std::string(to_string(c.attention.global_mode))},
              {"separate_global_projection", c.attention.separate_global_projection},
              {"layers", c.layers},
              {"ff_dim", c.ff_dim},
              {"max_positions", c.max_positions},
              {"use_tfidf_embeddings", c.use_tfidf_embeddings},
              {"buckets", c.buckets},
              {"variant", std::string(to_string(c.variant))},
              {"bow_transform", std::string(to_string(c.bow_transform))},
              {"task_kind", std::string(to_string(c.task_kind))},
              {"num_labels", c.num_labels},
              {"max_segments", c.max_segments},
              {"segment_len", c.segment_len},
              {"segment_layers", c.segment_layers},
              {"pooling", std::string(to_string(c.pooling))},
              {"layer_norm_eps", c.layer_norm_eps}};
}

EncoderConfig encoder_config_from(const json& j) {
  EncoderConfig c;
  c.vocab_size = get<std::size_t>(j, "vocab_size");
  c.attention.heads = get<std::size_t>(j, "heads");
  c.attention.head_dim = get<std::size_t>(j, "head_dim");
  c.attention.window = get<std::size_t>(j, "window");
  c.attention.global_mode = parse_global_mode(get<std::string>(j, "global_mode"));
  c.attention.separate_global_projection = get<bool>(j, "separate_global_projection");
  c.layers = get<std::size_t>(j, "layers");
  c.ff_dim = get<std::size_t>(j, "ff_dim");
  c.max_positions = get<std::size_t>(j, "max_positions");
  c.use_tfidf_embeddings = get<bool>(j, "use_tfidf_embeddings");
  c.buckets = get<std::size_t>(j, "buckets");
  c.variant = parse_variant_kind(get<std::string>(j, "variant"));
  c.bow_transform = parse_bow_transform(get<std::string>(j, "bow_transform"));
  c.task_kind = parse_task_kind(get<std::string>(j, "task_kind"));
  c.num_labels = get<std::size_t>(j, "num_labels");
  c.max_segments = get<std::size_t>(j, "max_segments");
  c.segment_len = get<std::size_t>(j, "segment_len");
  c.segment_layers = get<std::size_t>(j, "segment_layers");
  c.pooling = parse_pooling(get<std::string>(j, "pooling"));
  c.layer_norm_eps = get<double>(j, "layer_norm_eps");
  c.validate();
  return c;
}

json report_json(const EvalReport& r) {
  json j = header("longdoc.report");
  j["model"] = r.model;
  j["task"] = r.task;
  j["seed"] = r.seed;
  json splits = json::object();
  for (const auto& [name, s] : r.splits) splits[name] = json{{"micro_f1", s.micro}, {"macro_f1", s.macro}};
  j["splits"] = std::move(splits);
  j["dev_history"] = r.dev_history;
  j["chosen_epoch"] = r.chosen_epoch;
  j["epochs_run"] = r.epochs_run;
  j["parameter_count"] = r.parameter_count;
  j["seconds_per_sample"] = r.seconds_per_sample ? json(*r.seconds_per_sample) : json(nullptr);
  j["activation_bytes_per_sample"] =
      r.activation_bytes_per_sample ? json(*r.activation_bytes_per_sample) : json(nullptr);
  j["settings"] = r.settings;
  return j;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("write failed for " + path.string());
}

TaskSpec read_task(const std::filesystem::path& path) {
  const json j = parse(read_text_file(path), path.string());
  check_header(j, "longdoc.task");
  return task_from(j);
}

void write_task(const std::filesystem::path& path, const TaskSpec& task) {
  json j = header("longdoc.task");
  j.update(task_json(task));
  write_text_file(path, j.dump(2) + "\n");
}

std::string report_to_json(const EvalReport& report) { return report_json(report).dump(2) + "\n"; }

EvalReport report_from_json(const std::string& text) {
  const json j = parse(text, "report");
  check_header(j, "longdoc.report");
  EvalReport r;
  r.model = get<std::string>(j, "model");
  r.task = get<std::string>(j, "task");
  r.seed = get<std::uint64_t>(j, "seed");
  for (const auto& [name, s] : j.at("splits").items()) {
    r.splits[name] = F1Scores{get<double>(s, "micro_f1"), get<double>(s, "macro_f1")};
  }
  r.dev_history = get<std::vector<double>>(j, "dev_history");
  r.chosen_epoch = get<std::size_t>(j, "chosen_epoch");
  r.epochs_run = get<std::size_t>(j, "epochs_run");
  r.parameter_count = get<std::size_t>(j, "parameter_count");
  if (j.contains("seconds_per_sample") && !j["seconds_per_sample"].is_null()) {
    r.seconds_per_sample = get<double>(j, "seconds_per_sample");
  }
  if (j.contains("activation_bytes_per_sample") && !j["activation_bytes_per_sample"].is_null()) {
    r.activation_bytes_per_sample = get<std::size_t>(j, "activation_bytes_per_sample");
  }
  r.settings = get<std::map<std::string, std::string>>(j, "settings");
  r.validate();
  return r;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  write_text_file(path, report_to_json(report));
}

EvalReport read_report(const std::filesystem::path& path) {
  try {
    return report_from_json(read_text_file(path));
  } catch (const Error& e) {
    throw io_error(path.string() + ": " + e.detail());
  }
}

void save_tfidf(const std::filesystem::path& path, const TfidfModel& model, const std::optional<BucketModel>& buckets,
                const Vocabulary* vocab) {
  json j = header("longdoc.tfidf");
  if (vocab) j["vocab"] = vocab->words();
  j["model"] = tfidf_json(model);
  j["bucket_boundaries"] = buckets ? json(buckets->boundaries()) : json(nullptr);
  write_text_file(path, j.dump() + "\n");
}

std::pair<TfidfModel, std::optional<BucketModel>> load_tfidf(const std::filesystem::path& path) {
  const json j = parse(read_text_file(path), path.string());
  check_header(j, "longdoc.tfidf");
  std::optional<BucketModel> b;
  if (j.contains("bucket_boundaries") && !j["bucket_boundaries"].is_null()) {
    b = BucketModel(get<std::vector<double>>(j, "bucket_boundaries"));
  }
  return {tfidf_from(j.at("model")), std::move(b)};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j = header("longdoc.checkpoint");
  j["variant"] = ckpt.variant;
  j["task"] = task_json(ckpt.task);
  j["vocab"] = ckpt.vocab.words();
  j["tfidf"] = ckpt.tfidf ? tfidf_json(*ckpt.tfidf) : json(nullptr);
  j["bucket_boundaries"] = ckpt.buckets ? json(ckpt.buckets->boundaries()) : json(nullptr);
  if (ckpt.linear) {
    const auto& m = *ckpt.linear;
    j["linear"] = json{{"task_kind", std::string(to_string(m.task_kind))},
                       {"reg", m.reg},
                       {"weights", matrix_json(m.weights)},
                       {"bias", m.bias}};
  }
  if (ckpt.encoder) {
    json arrays = json::object();
    ckpt.encoder->state.visit([&](const std::string& name, const Matrix& m) { arrays[name] = matrix_json(m); });
    j["encoder"] = json{{"config", encoder_config_json(ckpt.encoder->config)}, {"arrays", std::move(arrays)}};
  }
  write_text_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json j = parse(read_text_file(path), path.string());
  check_header(j, "longdoc.checkpoint");
  Checkpoint c;
  c.variant = get<std::string>(j, "variant");
  c.task = task_from(j.at("task"));
  c.vocab = Vocabulary(get<std::vector<std::string>>(j, "vocab"));
  if (j.contains("tfidf") && !j["tfidf"].is_null()) c.tfidf = tfidf_from(j["tfidf"]);
  if (j.contains("bucket_boundaries") && !j["bucket_boundaries"].is_null()) {
    c.buckets = BucketModel(get<std::vector<double>>(j, "bucket_boundaries"));
  }
  if (j.contains("linear")) {
    const auto& l = j["linear"];
    LinearModel m;
    m.task_kind = parse_task_kind(get<std::string>(l, "task_kind"));
    m.reg = get<double>(l, "reg");
    m.weights = matrix_from(l.at("weights"), "linear.weights");
    m.bias = get<std::vector<double>>(l, "bias");
    if (m.bias.size() != m.weights.rows()) throw io_error("linear bias length does not match the weights");
    c.linear = std::move(m);
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    Model m;
    m.config = encoder_config_from(e.at("config"));
    m.state = init_state(m.config, 0);
    const auto& arrays = e.at("arrays");
    std::size_t seen = 0;
    m.state.visit([&](const std::string& name, Matrix& dst) {
      if (!arrays.contains(name)) throw io_error("checkpoint lacks array '" + name + "'");
      Matrix src = matrix_from(arrays[name], name);
      if (!src.same_shape(dst)) throw io_error("array '" + name + "' does not match the configured shape");
      dst = std::move(src);
      ++seen;
    });
    if (seen != arrays.size()) throw io_error("checkpoint holds arrays the configuration does not use");
    if (!m.state.all_finite()) throw io_error("checkpoint contains non-finite values");
    if (m.config.vocab_size != c.vocab.size()) throw io_error("vocabulary size does not match the encoder");
    c.encoder = std::move(m);
  }
  if (!c.linear && !c.encoder) throw io_error("checkpoint holds no model");
  return c;
}

}  // namespace longdoc
