#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "context_select.hpp"
#include "corpus.hpp"
#include "gateway.hpp"
#include "qa_types.hpp"

namespace attribench {

struct PromptSettings {
  std::string model;
  double temperature = 0.0;
  int max_tokens = 1024;
};

/// Multi-hop generation prompt: one "Title:" block and "[i, 0] sentence" line
/// per chain position. Throws ValidationError for unresolvable refs.
ChatRequest render_multihop_prompt(const HopChain& chain, const ArticleStore& store,
                                   const PromptSettings& settings);

/// Dialogue generation prompt over the context's sentences numbered from 0.
ChatRequest render_dialogue_prompt(const DialogueContext& context, const ArticleStore& store,
                                   const PromptSettings& settings);

/// Zero-shot attribution prompt. Sentences carry SentenceNumbering numbers;
/// history turns, when present, are listed before the question.
ChatRequest render_attribution_prompt(std::span<const DocumentExcerpt> documents, std::string_view question,
                                      std::string_view answer, std::span<const DialogueTurn> history,
                                      const PromptSettings& settings);

/// "(2), (5)" for {2, 5}; empty set gives an empty string.
std::string format_sentence_numbers(const std::set<std::size_t>& numbers);

struct ExtractedNumbers {
  std::vector<long long> numbers;  // in reply order, duplicates kept
  bool parenthesized = false;
};

/// Every "(k)" integer in an attribution reply; when the reply has none, every
/// standalone integer instead.
ExtractedNumbers extract_sentence_numbers(std::string_view reply);

ChatRequest render_rephrase_prompt(std::span<const DialogueTurn> history, std::string_view question,
                                   std::string_view answer, const PromptSettings& settings);

}  // namespace attribench
