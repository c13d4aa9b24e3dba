#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "context_select.hpp"
#include "errors.hpp"
#include "gateway.hpp"
#include "prompts.hpp"
#include "qa_types.hpp"

namespace attribench {

enum class RejectReason { malformed_output, hallucinated_ref, empty_attribution, count_violation, invalid_pair };
std::string_view to_string(RejectReason reason);

/// Model output that cannot become a QAPair. Recoverable: generate() retries.
class OutputRejected : public Error {
 public:
  OutputRejected(RejectReason reason, const std::string& detail)
      : Error(std::string(to_string(reason)) + ": " + detail), reason_(reason) {}
  RejectReason reason() const noexcept { return reason_; }

 private:
  RejectReason reason_;
};

using GenerationContext = std::variant<HopChain, DialogueContext>;

/// Every SentenceRef shown to the model for this context.
std::vector<SentenceRef> offered_refs(const GenerationContext& context);
/// Articles the context was drawn from, in context order.
std::vector<std::string> source_article_ids(const GenerationContext& context);

/// Content between the first and last ``` fence, or nullopt when unfenced.
std::optional<std::string> strip_code_fences(std::string_view text);

/// Expects {"question", "answer", "ids": [[i, 0], ...], "reasoning"}; [i, 0]
/// maps to the i-th chain ref.
QAPair parse_multihop_response(std::string_view text, const HopChain& chain);

/// Expects a JSON array of 5 to 10 {"question", "answer", "sentence_numbers"};
/// item k carries items 0..k-1 as its dialogue history.
std::vector<QAPair> parse_dialogue_response(std::string_view text, const DialogueContext& context);

struct PairVerdict {
  bool accepted = false;
  std::string reason;
};

/// Structural check independent of the parsers: non-empty text, non-empty
/// attributions, every ref offered by the context and resolvable in the store.
PairVerdict validate_pair(const QAPair& pair, const GenerationContext& context, const ArticleStore& store);

struct AttemptLog {
  int attempt = 0;
  std::string raw;
  std::optional<RejectReason> rejection;
  std::string detail;
};

struct GenerationOptions {
  PromptSettings prompt;
  int max_retries = 3;  // total model calls per context
};

struct GenerationBatch {
  GenerationContext context;
  ChatRequest prompt;
  std::string prompt_hash;
  std::vector<AttemptLog> attempts;
  std::vector<QAPair> parsed;  // from the final attempt
  std::vector<PairVerdict> verdicts;
  std::vector<QAPair> pairs;  // accepted pairs only
  bool failed = false;
};

class GenerationFailed : public Error {
 public:
  explicit GenerationFailed(GenerationBatch batch);
  RejectReason last_reason() const noexcept { return last_reason_; }
  const GenerationBatch& batch() const noexcept { return batch_; }

 private:
  GenerationBatch batch_;
  RejectReason last_reason_;
};

ChatRequest render_prompt(const GenerationContext& context, const ArticleStore& store,
                          const PromptSettings& settings);

/// Render, call, parse and validate until a pair is accepted or max_retries
/// calls were made. Output rejections never throw; the batch is marked failed.
/// Endpoint failures propagate.
GenerationBatch run_generation(const GenerationContext& context, const ArticleStore& store, Gateway& gateway,
                               const GenerationOptions& options);

/// As run_generation(), but throws GenerationFailed when nothing was accepted.
std::vector<QAPair> generate(const GenerationContext& context, const ArticleStore& store, Gateway& gateway,
                             const GenerationOptions& options);

nlohmann::json batch_to_json(const GenerationBatch& batch);

/// One validated QA pair with the context it was generated from.
struct GeneratedRecord {
  std::string id;
  GenerationContext context;
  QAPair qa;
  std::string model;
  std::string prompt_hash;

  bool operator==(const GeneratedRecord&) const = default;
};

nlohmann::json context_to_json(const GenerationContext& context);
GenerationContext context_from_json(const nlohmann::json& j);
nlohmann::json qapair_to_json(const QAPair& qa);
QAPair qapair_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const GeneratedRecord& record);
GeneratedRecord record_from_json(const nlohmann::json& j);

/// Discriminative labels for an existing QA pair: every gateway answers the
/// zero-shot attribution prompt and the ballots are majority-voted. A gateway
/// that throws abstains; zero ballots is an error.
std::set<DocSentRef> synatt_labels(std::string_view question, std::string_view answer,
                                   std::span<const DocumentExcerpt> documents, std::span<Gateway* const> gateways,
                                   std::span<const DialogueTurn> history = {});

/// Standalone rewrite of a dialogue turn from a {"question", "answer"} reply.
/// Throws Error after max_retries malformed replies; endpoint failures propagate.
std::pair<std::string, std::string> rephrase_multiturn(std::span<const DialogueTurn> history,
                                                       std::string_view question, std::string_view answer,
                                                       Gateway& gateway, const GenerationOptions& options);

}  // namespace attribench
