#include "synthesis.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "parallel.hpp"
#include "voting.hpp"

namespace attribench {

using nlohmann::json;

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

// Parses raw model text as JSON, retrying once on the fenced content.
json parse_model_json(std::string_view text) {
  auto parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  if (auto inner = strip_code_fences(text)) {
    parsed = json::parse(*inner, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
  }
  throw OutputRejected(RejectReason::malformed_output, "reply is not valid JSON");
}

std::string required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw OutputRejected(RejectReason::malformed_output, std::string("missing key '") + key + "'");
  if (!it->is_string()) throw OutputRejected(RejectReason::malformed_output, std::string("'") + key + "' is not a string");
  return it->get<std::string>();
}

const json& required_array(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw OutputRejected(RejectReason::malformed_output, std::string("missing key '") + key + "'");
  if (!it->is_array()) throw OutputRejected(RejectReason::malformed_output, std::string("'") + key + "' is not an array");
  return *it;
}

long long required_integer(const json& v, const char* what) {
  if (!v.is_number_integer()) throw OutputRejected(RejectReason::malformed_output, std::string(what) + " is not an integer");
  return v.get<long long>();
}

json ref_to_json(const SentenceRef& ref) { return json::array({ref.article_id, ref.sentence_index}); }

SentenceRef ref_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("sentence ref must be [article_id, sentence_index]");
  return {j.at(0).get<std::string>(), j.at(1).get<std::size_t>()};
}

std::string excerpt(std::string_view s, std::size_t limit = 200) {
  return s.size() <= limit ? std::string(s) : std::string(s.substr(0, limit)) + "...";
}

}  // namespace

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::malformed_output: return "malformed_output";
    case RejectReason::hallucinated_ref: return "hallucinated_ref";
    case RejectReason::empty_attribution: return "empty_attribution";
    case RejectReason::count_violation: return "count_violation";
    case RejectReason::invalid_pair: return "invalid_pair";
  }
  return "unknown";
}

std::vector<SentenceRef> offered_refs(const GenerationContext& context) {
  if (const auto* chain = std::get_if<HopChain>(&context)) return chain->refs;
  const auto& dlg = std::get<DialogueContext>(context);
  std::vector<SentenceRef> out;
  for (std::size_t i = dlg.range.begin; i < dlg.range.end; ++i) out.push_back({dlg.article_id, i});
  return out;
}

std::vector<std::string> source_article_ids(const GenerationContext& context) {
  if (const auto* chain = std::get_if<HopChain>(&context)) return chain->article_ids;
  return {std::get<DialogueContext>(context).article_id};
}

std::optional<std::string> strip_code_fences(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  const auto close = text.rfind("```");
  if (close == open) return std::nullopt;
  // Skip the rest of the opening fence line (the language tag).
  auto body = text.find('\n', open);
  if (body == std::string_view::npos || body > close) body = open + 3;
  else ++body;
  return std::string(text.substr(body, close - body));
}

QAPair parse_multihop_response(std::string_view text, const HopChain& chain) {
  const json doc = parse_model_json(text);
  if (!doc.is_object()) throw OutputRejected(RejectReason::malformed_output, "reply is not a JSON object");
  QAPair pair;
  pair.question = required_string(doc, "question");
  pair.answer = required_string(doc, "answer");
  const json& ids = required_array(doc, "ids");
  pair.reasoning = required_string(doc, "reasoning");

  for (const auto& id : ids) {
    if (!id.is_array() || id.size() != 2) {
      throw OutputRejected(RejectReason::malformed_output, "id " + id.dump() + " is not an [i, j] pair");
    }
    const long long i = required_integer(id[0], "id index");
    const long long j = required_integer(id[1], "id index");
    if (i < 0 || static_cast<std::size_t>(i) >= chain.refs.size() || j != 0) {
      throw OutputRejected(RejectReason::hallucinated_ref,
                           "id " + id.dump() + " not offered (chain has " + std::to_string(chain.refs.size()) +
                               " sentences)");
    }
    pair.attributions.insert(chain.refs[static_cast<std::size_t>(i)]);
  }
  if (pair.attributions.empty()) throw OutputRejected(RejectReason::empty_attribution, "'ids' is empty");
  return pair;
}

std::vector<QAPair> parse_dialogue_response(std::string_view text, const DialogueContext& context) {
  const json doc = parse_model_json(text);
  if (!doc.is_array()) throw OutputRejected(RejectReason::malformed_output, "reply is not a JSON array");
  if (doc.size() < 5 || doc.size() > 10) {
    throw OutputRejected(RejectReason::count_violation,
                         "expected 5 to 10 pairs, got " + std::to_string(doc.size()));
  }
  std::vector<QAPair> pairs;
  std::vector<DialogueTurn> history;
  for (const auto& item : doc) {
    if (!item.is_object()) throw OutputRejected(RejectReason::malformed_output, "array item is not an object");
    QAPair pair;
    pair.question = required_string(item, "question");
    pair.answer = required_string(item, "answer");
    for (const auto& n : required_array(item, "sentence_numbers")) {
      const long long k = required_integer(n, "sentence number");
      if (k < 0 || static_cast<std::size_t>(k) >= context.range.size()) {
        throw OutputRejected(RejectReason::hallucinated_ref,
                             "sentence number " + std::to_string(k) + " not offered (passage has " +
                                 std::to_string(context.range.size()) + " sentences)");
      }
      pair.attributions.insert({context.article_id, context.range.begin + static_cast<std::size_t>(k)});
    }
    pair.dialogue_history = history;
    history.push_back({pair.question, pair.answer});
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

PairVerdict validate_pair(const QAPair& pair, const GenerationContext& context, const ArticleStore& store) {
  if (blank(pair.question)) return {false, "empty question"};
  if (blank(pair.answer)) return {false, "empty answer"};
  if (pair.attributions.empty()) return {false, "empty attribution set"};
  const auto offered = offered_refs(context);
  const std::set<SentenceRef> allowed(offered.begin(), offered.end());
  for (const auto& ref : pair.attributions) {
    if (!allowed.contains(ref)) {
      return {false, "ref " + ref.article_id + "#" + std::to_string(ref.sentence_index) + " was not offered"};
    }
    if (!store.resolves(ref)) {
      return {false, "ref " + ref.article_id + "#" + std::to_string(ref.sentence_index) + " does not resolve"};
    }
  }
  return {true, ""};
}

GenerationFailed::GenerationFailed(GenerationBatch batch)
    : Error("generation failed after " + std::to_string(batch.attempts.size()) + " attempt(s)" +
            (batch.attempts.empty() ? std::string() : ": " + batch.attempts.back().detail)),
      batch_(std::move(batch)),
      last_reason_(batch_.attempts.empty() || !batch_.attempts.back().rejection
                       ? RejectReason::malformed_output
                       : *batch_.attempts.back().rejection) {}

ChatRequest render_prompt(const GenerationContext& context, const ArticleStore& store,
                          const PromptSettings& settings) {
  if (const auto* chain = std::get_if<HopChain>(&context)) return render_multihop_prompt(*chain, store, settings);
  return render_dialogue_prompt(std::get<DialogueContext>(context), store, settings);
}

GenerationBatch run_generation(const GenerationContext& context, const ArticleStore& store, Gateway& gateway,
                               const GenerationOptions& options) {
  if (options.max_retries < 1) throw ValidationError("max_retries must be at least 1");
  GenerationBatch batch{context, render_prompt(context, store, options.prompt), "", {}, {}, {}, {}, false};
  batch.prompt_hash = request_hash(batch.prompt);

  for (int attempt = 1; attempt <= options.max_retries; ++attempt) {
    AttemptLog log{attempt, gateway.chat(batch.prompt), std::nullopt, ""};
    batch.parsed.clear();
    batch.verdicts.clear();
    batch.pairs.clear();
    try {
      if (const auto* chain = std::get_if<HopChain>(&context)) {
        batch.parsed.push_back(parse_multihop_response(log.raw, *chain));
      } else {
        batch.parsed = parse_dialogue_response(log.raw, std::get<DialogueContext>(context));
      }
    } catch (const OutputRejected& e) {
      log.rejection = e.reason();
      log.detail = e.what();
      batch.attempts.push_back(std::move(log));
      continue;
    }
    for (const auto& pair : batch.parsed) {
      batch.verdicts.push_back(validate_pair(pair, context, store));
      if (batch.verdicts.back().accepted) batch.pairs.push_back(pair);
    }
    if (batch.pairs.empty()) {
      log.rejection = RejectReason::invalid_pair;
      log.detail = std::string(to_string(RejectReason::invalid_pair)) + ": " + batch.verdicts.front().reason;
      batch.attempts.push_back(std::move(log));
      continue;
    }
    batch.attempts.push_back(std::move(log));
    return batch;
  }
  batch.failed = true;
  return batch;
}

std::vector<QAPair> generate(const GenerationContext& context, const ArticleStore& store, Gateway& gateway,
                             const GenerationOptions& options) {
  auto batch = run_generation(context, store, gateway, options);
  if (batch.failed) throw GenerationFailed(std::move(batch));
  return batch.pairs;
}

json batch_to_json(const GenerationBatch& batch) {
  json attempts = json::array();
  for (const auto& a : batch.attempts) {
    attempts.push_back({{"attempt", a.attempt},
                        {"raw", a.raw},
                        {"rejection", a.rejection ? json(std::string(to_string(*a.rejection))) : json(nullptr)},
                        {"detail", a.detail}});
  }
  json parsed = json::array();
  for (std::size_t i = 0; i < batch.parsed.size(); ++i) {
    parsed.push_back({{"qa", qapair_to_json(batch.parsed[i])},
                      {"accepted", batch.verdicts[i].accepted},
                      {"reason", batch.verdicts[i].reason}});
  }
  return {{"context", context_to_json(batch.context)},
          {"prompt_hash", batch.prompt_hash},
          {"prompt", to_json(batch.prompt)},
          {"attempts", std::move(attempts)},
          {"parsed", std::move(parsed)},
          {"accepted", batch.pairs.size()},
          {"failed", batch.failed}};
}

json context_to_json(const GenerationContext& context) {
  if (const auto* chain = std::get_if<HopChain>(&context)) {
    return {{"kind", "multi_hop"}, {"chain", chain_to_json(*chain)}};
  }
  return {{"kind", "dialogue"}, {"dialogue", dialogue_to_json(std::get<DialogueContext>(context))}};
}

GenerationContext context_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "multi_hop") return chain_from_json(j.at("chain"));
  if (kind == "dialogue") return dialogue_from_json(j.at("dialogue"));
  throw ValidationError("unknown context kind '" + kind + "'");
}

json qapair_to_json(const QAPair& qa) {
  json refs = json::array();
  for (const auto& ref : qa.attributions) refs.push_back(ref_to_json(ref));
  json history = json::array();
  for (const auto& turn : qa.dialogue_history) history.push_back({{"question", turn.question}, {"answer", turn.answer}});
  return {{"question", qa.question},
          {"answer", qa.answer},
          {"attributions", std::move(refs)},
          {"reasoning", qa.reasoning ? json(*qa.reasoning) : json(nullptr)},
          {"dialogue_history", std::move(history)}};
}

QAPair qapair_from_json(const json& j) {
  QAPair qa;
  qa.question = j.at("question").get<std::string>();
  qa.answer = j.at("answer").get<std::string>();
  for (const auto& r : j.at("attributions")) qa.attributions.insert(ref_from_json(r));
  if (auto it = j.find("reasoning"); it != j.end() && !it->is_null()) qa.reasoning = it->get<std::string>();
  if (auto it = j.find("dialogue_history"); it != j.end()) {
    for (const auto& t : *it) qa.dialogue_history.push_back({t.at("question").get<std::string>(), t.at("answer").get<std::string>()});
  }
  return qa;
}

json record_to_json(const GeneratedRecord& record) {
  return {{"id", record.id},
          {"context", context_to_json(record.context)},
          {"qa", qapair_to_json(record.qa)},
          {"model", record.model},
          {"prompt_hash", record.prompt_hash}};
}

GeneratedRecord record_from_json(const json& j) {
  return {j.at("id").get<std::string>(), context_from_json(j.at("context")), qapair_from_json(j.at("qa")),
          j.at("model").get<std::string>(), j.at("prompt_hash").get<std::string>()};
}

std::set<DocSentRef> synatt_labels(std::string_view question, std::string_view answer,
                                   std::span<const DocumentExcerpt> documents, std::span<Gateway* const> gateways,
                                   std::span<const DialogueTurn> history) {
  if (gateways.empty()) throw ValidationError("synatt_labels needs at least one gateway");
  const SentenceNumbering numbering(documents);
  std::vector<std::optional<std::set<DocSentRef>>> ballots(gateways.size());
  parallel_for(gateways.size(), gateways.size(), [&](std::size_t i) {
    Gateway& gw = *gateways[i];
    const PromptSettings settings{gw.config().chat_model, gw.config().attribution_temperature, gw.config().max_tokens};
    std::string reply;
    try {
      reply = gw.chat(render_attribution_prompt(documents, question, answer, history, settings));
    } catch (const Error&) {
      return;  // abstain
    }
    std::set<DocSentRef> ballot;
    for (long long n : extract_sentence_numbers(reply).numbers) {
      if (n < 0) continue;
      if (auto ref = numbering.ref(static_cast<std::size_t>(n))) ballot.insert(*ref);
    }
    ballots[i] = std::move(ballot);
  });
  return majority_vote<DocSentRef>(ballots);
}

std::pair<std::string, std::string> rephrase_multiturn(std::span<const DialogueTurn> history,
                                                       std::string_view question, std::string_view answer,
                                                       Gateway& gateway, const GenerationOptions& options) {
  if (options.max_retries < 1) throw ValidationError("max_retries must be at least 1");
  const ChatRequest request = render_rephrase_prompt(history, question, answer, options.prompt);
  std::string detail;
  std::string raw;
  for (int attempt = 1; attempt <= options.max_retries; ++attempt) {
    raw = gateway.chat(request);
    try {
      const json doc = parse_model_json(raw);
      if (!doc.is_object()) throw OutputRejected(RejectReason::malformed_output, "reply is not a JSON object");
      auto q = required_string(doc, "question");
      auto a = required_string(doc, "answer");
      if (blank(q) || blank(a)) throw OutputRejected(RejectReason::invalid_pair, "empty question or answer");
      return {std::move(q), std::move(a)};
    } catch (const OutputRejected& e) {
      detail = e.what();
    }
  }
  throw EndpointError(0, "rephrase failed after " + std::to_string(options.max_retries) + " attempt(s): " + detail +
              " (last reply: " + excerpt(raw) + ")");
}

}  // namespace attribench
