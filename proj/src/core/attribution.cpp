#include "attribution.hpp"

#include <chrono>

#include "errors.hpp"
#include "eval.hpp"
#include "jsonl.hpp"
#include "parallel.hpp"
#include "prompts.hpp"
#include "rng.hpp"
#include "voting.hpp"

namespace attribench {

using nlohmann::json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

ParsedReply parse_attribution_reply(std::string_view reply, std::span<const DocumentExcerpt> documents) {
  const SentenceNumbering numbering(documents);
  ParsedReply out;
  const auto extracted = extract_sentence_numbers(reply);
  out.unparseable = extracted.numbers.empty();
  for (long long n : extracted.numbers) {
    std::optional<DocSentRef> ref;
    if (n >= 0) ref = numbering.ref(static_cast<std::size_t>(n));
    if (ref) {
      out.refs.insert(*ref);
    } else {
      out.dropped.push_back(n);
    }
  }
  return out;
}

RandomAttributor::RandomAttributor(double p, std::uint64_t seed) : p_(p), seed_(seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("random attributor p must be in [0, 1]");
}

AttributionPrediction RandomAttributor::attribute(const TrainingSample& sample) {
  AttributionPrediction pred{sample.id, method(), {}, std::nullopt, false, {}, 0.0};
  Rng rng(derive_seed(seed_, fnv1a64(sample.id)));
  for (std::size_t d = 0; d < sample.documents.size(); ++d) {
    for (std::size_t s = 0; s < sample.documents[d].sentences.size(); ++s) {
      if (rng.unit() < p_) pred.refs.insert({d, s});
    }
  }
  return pred;
}

double default_random_p(std::span<const TrainingSample> validation) {
  if (validation.empty()) throw ValidationError("default_random_p needs validation samples");
  double gold = 0.0;
  double context = 0.0;
  for (const auto& s : validation) {
    gold += static_cast<double>(s.gold.size());
    context += static_cast<double>(SentenceNumbering(s.documents).total());
  }
  return context > 0.0 ? gold / context : 0.0;
}

std::vector<double> sentence_scores(const TrainingSample& sample, Gateway& gateway) {
  std::vector<std::string> inputs{sample.qa.question + " " + sample.qa.answer};
  for (const auto& doc : sample.documents) inputs.insert(inputs.end(), doc.sentences.begin(), doc.sentences.end());
  const std::size_t limit = std::max<std::size_t>(1, gateway.config().embed_batch_limit);
  std::vector<EmbeddingVector> vectors;
  for (std::size_t begin = 0; begin < inputs.size(); begin += limit) {
    const std::size_t end = std::min(inputs.size(), begin + limit);
    auto part = gateway.embed(std::span<const std::string>(inputs).subspan(begin, end - begin));
    vectors.insert(vectors.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::vector<double> scores;
  for (std::size_t i = 1; i < vectors.size(); ++i) scores.push_back(dot(vectors[0], vectors[i]));
  return scores;
}

std::set<DocSentRef> threshold_refs(std::span<const DocumentExcerpt> documents, std::span<const double> scores,
                                    double threshold) {
  const SentenceNumbering numbering(documents);
  if (scores.size() != numbering.total()) throw ValidationError("score count does not match the context");
  std::set<DocSentRef> out;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    if (scores[n] >= threshold) out.insert(*numbering.ref(n));
  }
  return out;
}

EmbeddingThresholdAttributor::EmbeddingThresholdAttributor(Gateway& gateway, double threshold)
    : gateway_(gateway), threshold_(threshold) {}

AttributionPrediction EmbeddingThresholdAttributor::attribute(const TrainingSample& sample) {
  const auto start = std::chrono::steady_clock::now();
  const auto scores = sentence_scores(sample, gateway_);
  AttributionPrediction pred{sample.id, method(), threshold_refs(sample.documents, scores, threshold_),
                             std::nullopt, false, {}, 0.0};
  pred.latency_ms = elapsed_ms(start);
  return pred;
}

double tune_threshold(std::span<const TrainingSample> validation, std::span<const std::vector<double>> scores,
                      std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("threshold grid is empty");
  if (validation.empty()) throw ValidationError("validation set is empty");
  if (scores.size() != validation.size()) throw ValidationError("one score vector per validation sample expected");
  double best = grid[0];
  double best_f1 = -1.0;
  for (double t : grid) {
    double total = 0.0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      total += prf(threshold_refs(validation[i].documents, scores[i], t), validation[i].gold).f1;
    }
    const double mean = total / static_cast<double>(validation.size());
    if (mean > best_f1 || (mean == best_f1 && t > best)) {
      best = t;
      best_f1 = mean;
    }
  }
  return best;
}

double tune_threshold(std::span<const TrainingSample> validation, Gateway& gateway, std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("threshold grid is empty");
  std::vector<std::vector<double>> scores;
  for (const auto& s : validation) scores.push_back(sentence_scores(s, gateway));
  return tune_threshold(validation, scores, grid);
}

PromptAttributor::PromptAttributor(Gateway& gateway, std::string model_id, std::string method)
    : gateway_(gateway),
      model_(model_id.empty() ? gateway.config().chat_model : std::move(model_id)),
      method_(method.empty() ? "zero_shot:" + model_ : std::move(method)) {}

AttributionPrediction PromptAttributor::attribute(const TrainingSample& sample) {
  const auto start = std::chrono::steady_clock::now();
  const PromptSettings settings{model_, gateway_.config().attribution_temperature, gateway_.config().max_tokens};
  const auto request = render_attribution_prompt(sample.documents, sample.qa.question, sample.qa.answer,
                                                 sample.qa.dialogue_history, settings);
  std::string reply = gateway_.chat(request);
  auto parsed = parse_attribution_reply(reply, sample.documents);
  AttributionPrediction pred{sample.id,          method_, std::move(parsed.refs), std::move(reply),
                             parsed.unparseable, std::move(parsed.dropped), 0.0};
  pred.latency_ms = elapsed_ms(start);
  return pred;
}

EnsembleAttributor::EnsembleAttributor(std::vector<std::shared_ptr<Attributor>> members, std::string method)
    : members_(std::move(members)), method_(std::move(method)) {
  if (members_.size() < 2) throw ValidationError("an ensemble needs at least two members");
}

AttributionPrediction EnsembleAttributor::attribute(const TrainingSample& sample) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::optional<std::set<DocSentRef>>> ballots;
  std::string last_error;
  for (auto& member : members_) {
    try {
      ballots.emplace_back(member->attribute(sample).refs);
    } catch (const Error& e) {
      ballots.emplace_back(std::nullopt);
      last_error = e.what();
    }
  }
  const bool any = std::any_of(ballots.begin(), ballots.end(), [](const auto& b) { return b.has_value(); });
  if (!any) throw EndpointError(0, "every ensemble member failed on " + sample.id + ": " + last_error);
  AttributionPrediction pred{sample.id, method_, majority_vote<DocSentRef>(ballots), std::nullopt, false, {}, 0.0};
  pred.latency_ms = elapsed_ms(start);
  return pred;
}

std::vector<AttributionPrediction> attribute_all(Attributor& attributor, std::span<const TrainingSample> samples,
                                                 std::size_t workers) {
  std::vector<AttributionPrediction> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) { out[i] = attributor.attribute(samples[i]); });
  return out;
}

json prediction_to_json(const AttributionPrediction& p) {
  json refs = json::array();
  for (const auto& r : p.refs) refs.push_back({r.document, r.sentence});
  return {{"sample_id", p.sample_id},
          {"method", p.method},
          {"refs", std::move(refs)},
          {"raw", p.raw ? json(*p.raw) : json(nullptr)},
          {"unparseable", p.unparseable}};
}

AttributionPrediction prediction_from_json(const json& j) {
  AttributionPrediction p;
  p.sample_id = j.at("sample_id").get<std::string>();
  p.method = j.at("method").get<std::string>();
  for (const auto& r : j.at("refs")) {
    if (!r.is_array() || r.size() != 2) throw ValidationError("prediction ref must be [document, sentence]");
    p.refs.insert({r[0].get<std::size_t>(), r[1].get<std::size_t>()});
  }
  if (auto it = j.find("raw"); it != j.end() && !it->is_null()) p.raw = it->get<std::string>();
  p.unparseable = j.value("unparseable", false);
  return p;
}

void save_predictions(std::span<const AttributionPrediction> predictions, const std::filesystem::path& path) {
  OutputFile file(path);
  for (const auto& p : predictions) file.write_json_line(prediction_to_json(p));
  file.commit();
}

std::vector<AttributionPrediction> load_predictions(const std::filesystem::path& path) {
  std::vector<AttributionPrediction> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(prediction_from_json(j)); });
  return out;
}

}  // namespace attribench
