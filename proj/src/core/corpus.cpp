#include "corpus.hpp"

#include <fstream>
#include <unordered_set>

#include "errors.hpp"
#include "jsonl.hpp"
#include "segment.hpp"

namespace attribench {

using nlohmann::json;

SentenceRange first_paragraph(const Article& article) {
  if (article.sentences.empty()) {
    throw ValidationError("article '" + article.id + "' has no sentences");
  }
  return {0, article.first_paragraph_end};
}

void validate_article(const Article& a) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("article '" + a.id + "': " + what);
  };
  if (a.id.empty()) throw ValidationError("article id must be non-empty");
  for (std::size_t i = 0; i < a.sentences.size(); ++i) {
    if (a.sentences[i].empty()) fail("sentence " + std::to_string(i) + " is empty");
  }
  if (a.sentences.empty() ? a.first_paragraph_end != 0
                          : (a.first_paragraph_end < 1 || a.first_paragraph_end > a.sentences.size())) {
    fail("first_paragraph_end " + std::to_string(a.first_paragraph_end) + " out of range");
  }
  for (const auto& link : a.links) {
    if (link.sentence_index >= a.sentences.size()) {
      fail("link sentence_index " + std::to_string(link.sentence_index) + " out of range");
    }
    const auto len = a.sentences[link.sentence_index].size();
    if (link.start > link.end || link.end > len) {
      fail("link span [" + std::to_string(link.start) + ", " + std::to_string(link.end) +
           ") outside sentence " + std::to_string(link.sentence_index));
    }
    if (link.target_id.empty()) fail("link with empty target_id");
  }
}

ArticleStore::ArticleStore(std::vector<Article> members, std::vector<Article> reference)
    : member_count_(members.size()) {
  all_ = std::move(members);
  all_.reserve(all_.size() + reference.size());
  for (auto& a : reference) all_.push_back(std::move(a));
  index_.reserve(all_.size());
  for (std::size_t i = 0; i < all_.size(); ++i) {
    validate_article(all_[i]);
    if (!index_.emplace(all_[i].id, i).second) {
      throw ValidationError("duplicate article id '" + all_[i].id + "'");
    }
  }
}

const Article* ArticleStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &all_[it->second];
}

const Article& ArticleStore::at(std::string_view id) const {
  const Article* a = find(id);
  if (!a) throw ValidationError("unknown article '" + std::string(id) + "'");
  return *a;
}

bool ArticleStore::is_member(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it != index_.end() && it->second < member_count_;
}

bool ArticleStore::resolves(const SentenceRef& ref) const {
  const Article* a = find(ref.article_id);
  return a && ref.sentence_index < a->sentences.size();
}

const std::string& ArticleStore::sentence(const SentenceRef& ref) const {
  const Article& a = at(ref.article_id);
  if (ref.sentence_index >= a.sentences.size()) {
    throw ValidationError("sentence " + std::to_string(ref.sentence_index) + " out of range in '" +
                          ref.article_id + "'");
  }
  return a.sentences[ref.sentence_index];
}

bool ArticleStore::operator==(const ArticleStore& other) const {
  return member_count_ == other.member_count_ && all_ == other.all_;
}

namespace {

std::size_t get_index(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ValidationError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

const std::string& get_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get_ref<const std::string&>();
}

const json& get_array(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_array()) throw ValidationError(std::string("field '") + key + "' must be an array");
  return *it;
}

void read_paragraphs(const json& record, Article& a) {
  const json& paragraphs = get_array(record, "paragraphs");
  // (paragraph, byte offset) -> (sentence index, offset within sentence)
  std::vector<std::vector<SentenceSpan>> spans;
  std::vector<std::size_t> first_sentence;
  for (const auto& p : paragraphs) {
    if (!p.is_string()) throw ValidationError("paragraphs must be strings");
    const auto& text = p.get_ref<const std::string&>();
    first_sentence.push_back(a.sentences.size());
    spans.push_back(segment_spans(text));
    for (const auto& s : spans.back()) a.sentences.push_back(text.substr(s.begin, s.end - s.begin));
    if (a.first_paragraph_end == 0) a.first_paragraph_end = a.sentences.size();
  }
  if (auto it = record.find("links"); it != record.end()) {
    if (!it->is_array()) throw ValidationError("field 'links' must be an array");
    for (const auto& l : *it) {
      const std::size_t p = get_index(l, "paragraph");
      const std::size_t start = get_index(l, "start");
      const std::size_t end = get_index(l, "end");
      if (p >= spans.size()) throw ValidationError("link paragraph out of range");
      bool placed = false;
      for (std::size_t s = 0; s < spans[p].size(); ++s) {
        const auto& sp = spans[p][s];
        if (start >= sp.begin && end <= sp.end && start <= end) {
          a.links.push_back({first_sentence[p] + s, start - sp.begin, end - sp.begin,
                             get_string(l, "target_id")});
          placed = true;
          break;
        }
      }
      if (!placed) throw ValidationError("link span crosses a sentence boundary");
    }
  }
}

}  // namespace

Article article_from_json(const json& record) {
  if (!record.is_object()) throw ValidationError("record must be a JSON object");
  Article a;
  a.id = get_string(record, "id");
  a.title = get_string(record, "title");
  if (!record.contains("sentences") && record.contains("paragraphs")) {
    read_paragraphs(record, a);
  } else {
    for (const auto& s : get_array(record, "sentences")) {
      if (!s.is_string()) throw ValidationError("sentences must be strings");
      a.sentences.push_back(s.get<std::string>());
    }
    a.first_paragraph_end =
        record.contains("first_paragraph_end") ? get_index(record, "first_paragraph_end") : a.sentences.size();
    if (auto it = record.find("links"); it != record.end()) {
      if (!it->is_array()) throw ValidationError("field 'links' must be an array");
      for (const auto& l : *it) {
        if (!l.is_object()) throw ValidationError("links must be objects");
        a.links.push_back({get_index(l, "sentence_index"), get_index(l, "start"), get_index(l, "end"),
                           get_string(l, "target_id")});
      }
    }
  }
  validate_article(a);
  return a;
}

json article_to_json(const Article& a) {
  json links = json::array();
  for (const auto& l : a.links) {
    links.push_back({{"sentence_index", l.sentence_index},
                     {"start", l.start},
                     {"end", l.end},
                     {"target_id", l.target_id}});
  }
  return {{"id", a.id},
          {"title", a.title},
          {"sentences", a.sentences},
          {"first_paragraph_end", a.first_paragraph_end},
          {"links", std::move(links)}};
}

ArticleStore ingest(const std::filesystem::path& path) {
  std::vector<Article> members;
  std::vector<Article> reference;
  std::unordered_map<std::string, std::size_t> seen;  // id -> line
  for_each_jsonl(path, [&](const json& record, std::size_t line) {
    Article a = article_from_json(record);
    auto [it, inserted] = seen.emplace(a.id, line);
    if (!inserted) {
      throw ParseError(line, "duplicate article id '" + a.id + "' (first defined on line " +
                                 std::to_string(it->second) + ", again on line " + std::to_string(line) +
                                 ")");
    }
    const bool ref_only = record.value("reference_only", false);
    (ref_only ? reference : members).push_back(std::move(a));
  });
  return ArticleStore(std::move(members), std::move(reference));
}

void save(const ArticleStore& store, const std::filesystem::path& path) {
  OutputFile out(path);
  for (const auto& a : store.articles()) out.write_json_line(article_to_json(a));
  for (const auto& a : store.reference_articles()) {
    json j = article_to_json(a);
    j["reference_only"] = true;
    out.write_json_line(j);
  }
  out.commit();
}

namespace {

bool has_resolvable_link(const ArticleStore& store, const Article& a) {
  for (const auto& l : a.links) {
    if (l.target_id != a.id && store.find(l.target_id)) return true;
  }
  return false;
}

}  // namespace

ArticleStore filter_linkable(const ArticleStore& store) {
  std::vector<Article> kept;
  std::vector<Article> rest;
  for (const auto& a : store.all_articles()) {
    bool keep = false;
    if (store.is_member(a.id)) {
      for (const auto& l : a.links) {
        if (l.sentence_index >= a.first_paragraph_end || l.target_id == a.id) continue;
        const Article* target = store.find(l.target_id);
        if (target && has_resolvable_link(store, *target)) {
          keep = true;
          break;
        }
      }
    }
    (keep ? kept : rest).push_back(a);
  }
  return ArticleStore(std::move(kept), std::move(rest));
}

}  // namespace attribench
