#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace attribench {

/// A link from a byte span of one sentence to another article.
struct LinkAnnotation {
  std::size_t sentence_index = 0;
  std::size_t start = 0;  // byte offsets into the UTF-8 sentence
  std::size_t end = 0;
  std::string target_id;

  bool operator==(const LinkAnnotation&) const = default;
};

/// The atomic attribution unit: one sentence of one article.
struct SentenceRef {
  std::string article_id;
  std::size_t sentence_index = 0;

  auto operator<=>(const SentenceRef&) const = default;
  bool operator==(const SentenceRef&) const = default;
};

struct SentenceRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - begin; }
  bool empty() const { return end == begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const SentenceRange&) const = default;
};

struct Article {
  std::string id;
  std::string title;
  std::vector<std::string> sentences;
  std::vector<LinkAnnotation> links;
  std::size_t first_paragraph_end = 0;

  bool operator==(const Article&) const = default;
};

/// Sentences [0, first_paragraph_end). Throws ValidationError for an article without sentences.
SentenceRange first_paragraph(const Article& article);

/// Checks the Article invariants; throws ValidationError naming the violation.
void validate_article(const Article& article);

// Immutable set of articles keyed by id.
//
// A store has "member" articles, which are what articles() and size() report,
// and optionally "reference" articles that are only reachable through find().
// filter_linkable() moves articles that fail the linkability predicate into the
// reference set so that hop targets stay resolvable while only members are used
// as starting points. Freshly ingested stores have no reference articles.
class ArticleStore {
 public:
  ArticleStore() = default;
  /// Throws ValidationError on invalid articles or duplicate ids.
  explicit ArticleStore(std::vector<Article> members, std::vector<Article> reference = {});

  std::span<const Article> articles() const { return {all_.data(), member_count_}; }
  std::span<const Article> reference_articles() const {
    return {all_.data() + member_count_, all_.size() - member_count_};
  }
  std::span<const Article> all_articles() const { return all_; }
  std::size_t size() const { return member_count_; }
  bool empty() const { return member_count_ == 0; }

  /// Looks up members and reference articles alike.
  const Article* find(std::string_view id) const;
  const Article& at(std::string_view id) const;
  bool is_member(std::string_view id) const;

  bool resolves(const SentenceRef& ref) const;
  /// Throws ValidationError if the ref does not resolve.
  const std::string& sentence(const SentenceRef& ref) const;

  bool operator==(const ArticleStore& other) const;

 private:
  std::vector<Article> all_;
  std::size_t member_count_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses one corpus record. Accepts either pre-segmented "sentences" or raw
/// "paragraphs" (segmented here, with links given per paragraph).
Article article_from_json(const nlohmann::json& record);
nlohmann::json article_to_json(const Article& article);

/// Line-delimited corpus file. Errors carry the line number; a duplicate id
/// names both lines.
ArticleStore ingest(const std::filesystem::path& path);
void save(const ArticleStore& store, const std::filesystem::path& path);

/// Keeps articles with at least one first-paragraph link to an article in the
/// store that itself has at least one link resolving in the store.
ArticleStore filter_linkable(const ArticleStore& store);

}  // namespace attribench
