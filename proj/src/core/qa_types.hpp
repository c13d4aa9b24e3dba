#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"

namespace attribench {

struct DialogueTurn {
  std::string question;
  std::string answer;

  bool operator==(const DialogueTurn&) const = default;
};

struct QAPair {
  std::string question;
  std::string answer;
  std::set<SentenceRef> attributions;
  std::optional<std::string> reasoning;
  std::vector<DialogueTurn> dialogue_history;  // prior turns, oldest first

  bool operator==(const QAPair&) const = default;
};

/// The slice of an article placed into a sample's context.
struct DocumentExcerpt {
  std::string article_id;
  std::string title;
  std::vector<std::string> sentences;

  bool operator==(const DocumentExcerpt&) const = default;
};

/// (document position, sentence index) within one sample's context.
struct DocSentRef {
  std::size_t document = 0;
  std::size_t sentence = 0;

  auto operator<=>(const DocSentRef&) const = default;
  bool operator==(const DocSentRef&) const = default;
};

// Flat 0-based numbering of every sentence of a document list, document by
// document. This is the numbering shown in attribution prompts and used in
// exported targets.
class SentenceNumbering {
 public:
  explicit SentenceNumbering(std::span<const DocumentExcerpt> documents) {
    for (std::size_t d = 0; d < documents.size(); ++d) {
      offsets_.push_back(total_);
      total_ += documents[d].sentences.size();
    }
  }

  std::size_t total() const { return total_; }

  std::size_t number(const DocSentRef& ref) const { return offsets_.at(ref.document) + ref.sentence; }

  std::optional<DocSentRef> ref(std::size_t number) const {
    if (number >= total_) return std::nullopt;
    std::size_t d = offsets_.size() - 1;
    while (offsets_[d] > number) --d;
    return DocSentRef{d, number - offsets_[d]};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

}  // namespace attribench
