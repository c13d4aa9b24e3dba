#include "datasets.hpp"

#include <algorithm>

#include "errors.hpp"
#include "jsonl.hpp"
#include "prompt_assets.hpp"
#include "prompts.hpp"
#include "rng.hpp"
#include "segment.hpp"

namespace attribench {

using nlohmann::json;

std::string_view to_string(SampleKind kind) {
  return kind == SampleKind::multi_hop ? "multi_hop" : "dialogue";
}

SampleKind sample_kind_from_string(std::string_view s) {
  if (s == "multi_hop") return SampleKind::multi_hop;
  if (s == "dialogue") return SampleKind::dialogue;
  throw ValidationError("unknown sample kind '" + std::string(s) + "'");
}

std::string check_sample(const TrainingSample& sample) {
  if (sample.id.empty()) return "sample id is empty";
  if (sample.documents.empty()) return "sample has no documents";
  std::set<std::string> ids;
  for (const auto& doc : sample.documents) {
    if (!ids.insert(doc.article_id).second) return "document '" + doc.article_id + "' appears twice";
  }
  for (const auto& source : sample.provenance.source_ids) {
    if (!ids.contains(source)) return "source '" + source + "' is not among the documents";
  }
  if (sample.gold.empty()) return "gold set is empty";
  for (const auto& ref : sample.gold) {
    if (ref.document >= sample.documents.size() || ref.sentence >= sample.documents[ref.document].sentences.size()) {
      return "gold ref [" + std::to_string(ref.document) + ", " + std::to_string(ref.sentence) +
             "] does not resolve";
    }
  }
  return "";
}

TrainingSample assemble_sample(const GeneratedRecord& record, const ArticleStore& store,
                               std::span<const std::string> distractor_ids, const AssembleOptions& options) {
  TrainingSample sample;
  sample.id = record.id;
  sample.kind = std::holds_alternative<HopChain>(record.context) ? SampleKind::multi_hop : SampleKind::dialogue;
  sample.qa = record.qa;
  sample.provenance = {record.id, context_to_json(record.context), record.model, record.prompt_hash,
                       source_article_ids(record.context), {}};

  const std::set<std::string> sources(sample.provenance.source_ids.begin(), sample.provenance.source_ids.end());
  std::vector<std::string> doc_ids = sample.provenance.source_ids;
  if (sample.kind == SampleKind::multi_hop || options.dialogue_distractors) {
    for (const auto& id : distractor_ids) {
      if (sources.contains(id)) throw ValidationError("distractor '" + id + "' is a source of " + record.id);
      if (std::find(doc_ids.begin(), doc_ids.end(), id) != doc_ids.end()) continue;
      doc_ids.push_back(id);
      sample.provenance.distractor_ids.push_back(id);
    }
  }

  Rng rng(derive_seed(options.seed, fnv1a64(record.id)));
  rng.shuffle(doc_ids);
  for (const auto& id : doc_ids) {
    const Article& article = store.at(id);
    const auto range = first_paragraph(article);
    sample.documents.push_back({article.id, article.title,
                                std::vector<std::string>(article.sentences.begin() + range.begin,
                                                         article.sentences.begin() + range.end)});
  }

  for (const auto& ref : record.qa.attributions) {
    auto it = std::find(doc_ids.begin(), doc_ids.end(), ref.article_id);
    if (it == doc_ids.end() || ref.sentence_index >= sample.documents[it - doc_ids.begin()].sentences.size()) {
      throw Error("gold ref " + ref.article_id + "#" + std::to_string(ref.sentence_index) +
                  " is outside the assembled documents of " + record.id);
    }
    sample.gold.insert({static_cast<std::size_t>(it - doc_ids.begin()), ref.sentence_index});
  }
  if (auto problem = check_sample(sample); !problem.empty()) throw Error(record.id + ": " + problem);
  return sample;
}

std::vector<TrainingSample> assemble(std::span<const GeneratedRecord> records, const ArticleStore& store,
                                     const std::map<std::string, std::vector<std::string>>& distractors,
                                     const AssembleOptions& options) {
  std::vector<TrainingSample> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    auto it = distractors.find(record.id);
    std::span<const std::string> mined;
    if (it != distractors.end()) mined = it->second;
    out.push_back(assemble_sample(record, store, mined, options));
  }
  return out;
}

json sample_to_json(const TrainingSample& sample) {
  json docs = json::array();
  for (const auto& d : sample.documents) {
    docs.push_back({{"article_id", d.article_id}, {"title", d.title}, {"sentences", d.sentences}});
  }
  json gold = json::array();
  for (const auto& g : sample.gold) gold.push_back({g.document, g.sentence});
  const auto& p = sample.provenance;
  return {{"schema_version", kDatasetSchemaVersion},
          {"id", sample.id},
          {"kind", to_string(sample.kind)},
          {"qa", qapair_to_json(sample.qa)},
          {"documents", std::move(docs)},
          {"gold", std::move(gold)},
          {"provenance",
           {{"record_id", p.record_id},
            {"context", p.context},
            {"model", p.model},
            {"prompt_hash", p.prompt_hash},
            {"source_ids", p.source_ids},
            {"distractor_ids", p.distractor_ids}}}};
}

TrainingSample sample_from_json(const json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kDatasetSchemaVersion) {
    throw ValidationError("schema_version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kDatasetSchemaVersion) + ")");
  }
  TrainingSample s;
  s.id = j.at("id").get<std::string>();
  s.kind = sample_kind_from_string(j.at("kind").get<std::string>());
  s.qa = qapair_from_json(j.at("qa"));
  for (const auto& d : j.at("documents")) {
    s.documents.push_back({d.at("article_id").get<std::string>(), d.at("title").get<std::string>(),
                           d.at("sentences").get<std::vector<std::string>>()});
  }
  for (const auto& g : j.at("gold")) {
    if (!g.is_array() || g.size() != 2) throw ValidationError("gold ref must be [document, sentence]");
    s.gold.insert({g[0].get<std::size_t>(), g[1].get<std::size_t>()});
  }
  const auto& p = j.at("provenance");
  s.provenance = {p.at("record_id").get<std::string>(),
                  p.at("context"),
                  p.at("model").get<std::string>(),
                  p.at("prompt_hash").get<std::string>(),
                  p.at("source_ids").get<std::vector<std::string>>(),
                  p.at("distractor_ids").get<std::vector<std::string>>()};
  if (auto problem = check_sample(s); !problem.empty()) throw ValidationError(s.id + ": " + problem);
  return s;
}

void save_samples(std::span<const TrainingSample> samples, const std::filesystem::path& path) {
  OutputFile file(path);
  for (const auto& s : samples) file.write_json_line(sample_to_json(s));
  file.commit();
}

std::vector<TrainingSample> load_samples(const std::filesystem::path& path) {
  std::vector<TrainingSample> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back(sample_from_json(j));
    if (!seen.insert(out.back().id).second) throw ValidationError("duplicate sample id '" + out.back().id + "'");
  });
  return out;
}

json dataset_manifest(std::span<const TrainingSample> samples, const DatasetMeta& meta) {
  std::size_t multi_hop = 0;
  std::set<std::string> models;
  for (const auto& s : samples) {
    multi_hop += s.kind == SampleKind::multi_hop;
    models.insert(s.provenance.model);
  }
  return {{"schema_version", kDatasetSchemaVersion},
          {"samples", samples.size()},
          {"kinds", {{"multi_hop", multi_hop}, {"dialogue", samples.size() - multi_hop}}},
          {"generator_models", models},
          {"seed", meta.seed},
          {"leakage_report", meta.leakage_report ? json(*meta.leakage_report) : json(nullptr)},
          {"prompt_version", prompt_assets::kVersion},
          {"segmenter_version", kSegmenterVersion},
          {"export_note", "fine-tune with export_train; hyperparameters are in the export manifest"}};
}

std::string target_string(const TrainingSample& sample) {
  const SentenceNumbering numbering(sample.documents);
  std::set<std::size_t> numbers;
  for (const auto& ref : sample.gold) numbers.insert(numbering.number(ref));
  return format_sentence_numbers(numbers);
}

json export_record(const TrainingSample& sample) {
  const auto request = render_attribution_prompt(sample.documents, sample.qa.question, sample.qa.answer,
                                                 sample.qa.dialogue_history, PromptSettings{});
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"messages", std::move(messages)}, {"target", target_string(sample)}};
}

json export_manifest(std::size_t records, std::string_view style) {
  return {{"style", style},
          {"records", records},
          {"prompt_version", prompt_assets::kVersion},
          {"hyperparameters",
           {{"adapter", "lora"},
            {"lora_alpha", 64},
            {"lora_rank", 32},
            {"learning_rate", 1e-5},
            {"weight_decay", 1e-3},
            {"passes", 1}}}};
}

void export_train(std::span<const TrainingSample> samples, std::string_view style,
                  const std::filesystem::path& path, const std::filesystem::path& manifest_path) {
  if (style != "chat_sft") throw ValidationError("unknown export style '" + std::string(style) + "'");
  if (samples.empty()) throw ValidationError("nothing to export");
  OutputFile file(path);
  for (const auto& s : samples) file.write_json_line(export_record(s));
  file.commit();
  write_json_file(manifest_path, export_manifest(samples.size(), style));
}

}  // namespace attribench
