#pragma once

// Versioned JSON files: task description, TF-IDF model, evaluation report and
// model checkpoints. Every file carries "format" and "version" fields; doubles
// are written with round-trip precision so a reloaded model scores exactly
// like the one that was saved.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "longdoc/experiment.hpp"
#include "longdoc/tfidf.hpp"
#include "longdoc/train_eval.hpp"

namespace longdoc {

inline constexpr int kFormatVersion = 1;

TaskSpec read_task(const std::filesystem::path& path);
void write_task(const std::filesystem::path& path, const TaskSpec& task);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

// The vocabulary, when given, is stored so feature ids can be read back as words.
void save_tfidf(const std::filesystem::path& path, const TfidfModel& model,
                const std::optional<BucketModel>& buckets = std::nullopt, const Vocabulary* vocab = nullptr);
std::pair<TfidfModel, std::optional<BucketModel>> load_tfidf(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Text form of a whole file, for error messages and tests.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace longdoc
