#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "datasets.hpp"
#include "gateway.hpp"
#include "qa_types.hpp"

namespace attribench {

struct AttributionPrediction {
  std::string sample_id;
  std::string method;
  std::set<DocSentRef> refs;
  std::optional<std::string> raw;
  bool unparseable = false;
  std::vector<long long> dropped;  // out-of-range numbers from the reply
  double latency_ms = 0.0;         // kept in memory only, not persisted

  bool operator==(const AttributionPrediction&) const = default;
};

struct ParsedReply {
  std::set<DocSentRef> refs;
  std::vector<long long> dropped;
  bool unparseable = false;  // the reply contained no integers at all
};

/// Maps the integers of a reply onto the documents' sentence numbering,
/// dropping numbers outside it.
ParsedReply parse_attribution_reply(std::string_view reply, std::span<const DocumentExcerpt> documents);

class Attributor {
 public:
  virtual ~Attributor() = default;
  virtual std::string method() const = 0;
  /// Throws on endpoint failure.
  virtual AttributionPrediction attribute(const TrainingSample& sample) = 0;
};

/// Includes each sentence independently with probability p, drawn from a
/// per-sample stream of `seed`.
class RandomAttributor : public Attributor {
 public:
  RandomAttributor(double p, std::uint64_t seed);
  std::string method() const override { return "random"; }
  AttributionPrediction attribute(const TrainingSample& sample) override;

 private:
  double p_;
  std::uint64_t seed_;
};

/// Mean gold-set size divided by mean context size.
double default_random_p(std::span<const TrainingSample> validation);

/// Cosine similarity of every context sentence to "question answer", in
/// sentence-numbering order.
std::vector<double> sentence_scores(const TrainingSample& sample, Gateway& gateway);

class EmbeddingThresholdAttributor : public Attributor {
 public:
  EmbeddingThresholdAttributor(Gateway& gateway, double threshold);
  std::string method() const override { return "embed_threshold"; }
  AttributionPrediction attribute(const TrainingSample& sample) override;

 private:
  Gateway& gateway_;
  double threshold_;
};

std::set<DocSentRef> threshold_refs(std::span<const DocumentExcerpt> documents, std::span<const double> scores,
                                    double threshold);

/// Grid value with the highest mean per-example F1; ties go to the larger
/// threshold. Scores are computed once per sample.
double tune_threshold(std::span<const TrainingSample> validation, Gateway& gateway, std::span<const double> grid);
double tune_threshold(std::span<const TrainingSample> validation, std::span<const std::vector<double>> scores,
                      std::span<const double> grid);

// Zero-shot attribution prompt against a chat endpoint. A fine-tuned model
// behind an endpoint uses the same class with its own model id.
class PromptAttributor : public Attributor {
 public:
  /// Empty model_id means the gateway's chat model.
  PromptAttributor(Gateway& gateway, std::string model_id = {}, std::string method = {});
  std::string method() const override { return method_; }
  AttributionPrediction attribute(const TrainingSample& sample) override;

 private:
  Gateway& gateway_;
  std::string model_;
  std::string method_;
};

// A sentence is selected when at least half of the members that produced a
// prediction chose it. Members that throw abstain.
class EnsembleAttributor : public Attributor {
 public:
  /// Needs at least two members.
  EnsembleAttributor(std::vector<std::shared_ptr<Attributor>> members, std::string method = "ensemble");
  std::string method() const override { return method_; }
  AttributionPrediction attribute(const TrainingSample& sample) override;

 private:
  std::vector<std::shared_ptr<Attributor>> members_;
  std::string method_;
};

/// Runs `attributor` over samples on up to `workers` threads, in input order.
std::vector<AttributionPrediction> attribute_all(Attributor& attributor, std::span<const TrainingSample> samples,
                                                 std::size_t workers);

/// {"sample_id", "method", "refs": [[doc, sent], ...], "raw", "unparseable"}
nlohmann::json prediction_to_json(const AttributionPrediction& p);
AttributionPrediction prediction_from_json(const nlohmann::json& j);
void save_predictions(std::span<const AttributionPrediction> predictions, const std::filesystem::path& path);
std::vector<AttributionPrediction> load_predictions(const std::filesystem::path& path);

}  // namespace attribench
