#include "prompts.hpp"

#include <climits>
#include <regex>

#include "errors.hpp"
#include "prompt_assets.hpp"

namespace attribench {

namespace {

ChatRequest make_request(std::string_view system, std::string user, const PromptSettings& s) {
  ChatRequest r;
  r.model = s.model;
  r.temperature = s.temperature;
  r.max_tokens = s.max_tokens;
  r.messages.push_back({Role::system, std::string(system)});
  r.messages.push_back({Role::user, std::move(user)});
  return r;
}

void append_history(std::string& out, std::span<const DialogueTurn> history) {
  for (const auto& turn : history) {
    out += "Q: " + turn.question + "\nA: " + turn.answer + "\n";
  }
}

}  // namespace

ChatRequest render_multihop_prompt(const HopChain& chain, const ArticleStore& store,
                                   const PromptSettings& settings) {
  if (chain.refs.empty()) throw ValidationError("cannot render a prompt for an empty chain");
  std::string user(prompt_assets::multihop_user_header);
  user += "\n\n";
  for (std::size_t i = 0; i < chain.refs.size(); ++i) {
    const auto& ref = chain.refs[i];
    const Article& article = store.at(ref.article_id);
    user += "Title: " + article.title + "\n\n";
    user += "[" + std::to_string(i) + ", 0] " + store.sentence(ref) + "\n\n";
  }
  user += prompt_assets::multihop_user_footer;
  return make_request(prompt_assets::multihop_system, std::move(user), settings);
}

ChatRequest render_dialogue_prompt(const DialogueContext& context, const ArticleStore& store,
                                   const PromptSettings& settings) {
  if (context.range.empty()) throw ValidationError("dialogue context has an empty sentence range");
  const Article& article = store.at(context.article_id);
  if (context.range.end > article.sentences.size()) {
    throw ValidationError("dialogue range exceeds article '" + article.id + "'");
  }
  std::string user(prompt_assets::dialogue_user_header);
  user += "\n\nTitle: " + article.title + "\n\n";
  for (std::size_t k = 0; k < context.range.size(); ++k) {
    user += std::to_string(k) + ". " + article.sentences[context.range.begin + k] + "\n\n";
  }
  user += prompt_assets::dialogue_user_footer;
  return make_request(prompt_assets::dialogue_system, std::move(user), settings);
}

std::string format_sentence_numbers(const std::set<std::size_t>& numbers) {
  std::string out;
  for (auto n : numbers) {
    if (!out.empty()) out += ", ";
    out += "(" + std::to_string(n) + ")";
  }
  return out;
}

ChatRequest render_attribution_prompt(std::span<const DocumentExcerpt> documents, std::string_view question,
                                      std::string_view answer, std::span<const DialogueTurn> history,
                                      const PromptSettings& settings) {
  std::string user = "Context Document:\n\n";
  std::size_t number = 0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d > 0) user += "\n";
    if (!documents[d].title.empty()) user += "Title: " + documents[d].title + "\n";
    for (const auto& s : documents[d].sentences) {
      user += "(" + std::to_string(number++) + ") " + s + "\n";
    }
  }
  user += "\n";
  if (!history.empty()) {
    user += "Conversation history:\n";
    append_history(user, history);
    user += "\n";
  }
  user += "Question: " + std::string(question) + "\n\n";
  user += "Answer: " + std::string(answer) + "\n\n";

  std::set<std::size_t> all;
  for (std::size_t i = 0; i < number; ++i) all.insert(i);
  std::string instruction(prompt_assets::attribution_user_instruction);
  const std::string placeholder = "{choices}";
  instruction.replace(instruction.find(placeholder), placeholder.size(), format_sentence_numbers(all));
  user += instruction;
  return make_request(prompt_assets::attribution_system, std::move(user), settings);
}

ExtractedNumbers extract_sentence_numbers(std::string_view reply) {
  static const std::regex parenthesized(R"(\((\d+)\))");
  static const std::regex bare(R"(\b(\d+)\b)");
  auto collect = [&](const std::regex& re) {
    std::vector<long long> out;
    const std::string text(reply);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
      const std::string digits = (*it)[1].str();
      out.push_back(digits.size() > 18 ? LLONG_MAX : std::stoll(digits));
    }
    return out;
  };
  ExtractedNumbers result;
  result.numbers = collect(parenthesized);
  result.parenthesized = !result.numbers.empty();
  if (!result.parenthesized) result.numbers = collect(bare);
  return result;
}

ChatRequest render_rephrase_prompt(std::span<const DialogueTurn> history, std::string_view question,
                                   std::string_view answer, const PromptSettings& settings) {
  std::string user = "Conversation history:\n";
  if (history.empty()) {
    user += "(none)\n";
  } else {
    append_history(user, history);
  }
  user += "\nCurrent question: " + std::string(question) + "\n";
  user += "Current answer: " + std::string(answer) + "\n\n";
  user += prompt_assets::rephrase_user_instruction;
  return make_request(prompt_assets::rephrase_system, std::move(user), settings);
}

}  // namespace attribench
