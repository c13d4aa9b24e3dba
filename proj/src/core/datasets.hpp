#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "qa_types.hpp"
#include "synthesis.hpp"

namespace attribench {

inline constexpr int kDatasetSchemaVersion = 1;

enum class SampleKind { multi_hop, dialogue };
std::string_view to_string(SampleKind kind);
SampleKind sample_kind_from_string(std::string_view s);

struct Provenance {
  std::string record_id;
  nlohmann::json context;  // context_to_json() of the generation context
  std::string model;
  std::string prompt_hash;
  std::vector<std::string> source_ids;
  std::vector<std::string> distractor_ids;

  bool operator==(const Provenance&) const = default;
};

struct TrainingSample {
  std::string id;
  SampleKind kind = SampleKind::multi_hop;
  QAPair qa;
  std::vector<DocumentExcerpt> documents;  // first paragraphs, shuffled
  std::set<DocSentRef> gold;
  Provenance provenance;

  bool operator==(const TrainingSample&) const = default;
};

/// Empty when the sample is internally consistent, else the first problem.
std::string check_sample(const TrainingSample& sample);

struct AssembleOptions {
  std::uint64_t seed = 0;
  bool dialogue_distractors = true;
};

// Builds one sample from a generated record. Documents are the first
// paragraphs of the source articles followed by the distractors, shuffled with
// a per-record stream of options.seed. Throws Error when a gold ref falls
// outside every included document.
TrainingSample assemble_sample(const GeneratedRecord& record, const ArticleStore& store,
                               std::span<const std::string> distractor_ids, const AssembleOptions& options);

/// `distractors` maps record id to its mined distractor ids; missing entries
/// mean no distractors.
std::vector<TrainingSample> assemble(std::span<const GeneratedRecord> records, const ArticleStore& store,
                                     const std::map<std::string, std::vector<std::string>>& distractors,
                                     const AssembleOptions& options);

nlohmann::json sample_to_json(const TrainingSample& sample);
/// Validating parse; throws ValidationError on a schema-version mismatch or
/// an inconsistent sample.
TrainingSample sample_from_json(const nlohmann::json& j);

void save_samples(std::span<const TrainingSample> samples, const std::filesystem::path& path);
/// Errors carry the 1-based line number.
std::vector<TrainingSample> load_samples(const std::filesystem::path& path);

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::optional<std::string> leakage_report;
};

nlohmann::json dataset_manifest(std::span<const TrainingSample> samples, const DatasetMeta& meta);

/// Gold sentence numbers in prompt numbering, e.g. "(2), (5)".
std::string target_string(const TrainingSample& sample);

/// One chat record per sample: the zero-shot attribution prompt as messages
/// and target_string() as target.
nlohmann::json export_record(const TrainingSample& sample);

/// Fine-tuning hyperparameters for the external trainer.
nlohmann::json export_manifest(std::size_t records, std::string_view style);

/// Writes `path` and `manifest_path`. Only the "chat_sft" style exists.
void export_train(std::span<const TrainingSample> samples, std::string_view style,
                  const std::filesystem::path& path, const std::filesystem::path& manifest_path);

}  // namespace attribench
