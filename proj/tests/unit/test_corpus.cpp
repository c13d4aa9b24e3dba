#include <doctest.h>

#include "corpus.hpp"
#include "errors.hpp"
#include "test_support.hpp"

using namespace attribench;
using nlohmann::json;
using testsupport::TempDir;

namespace {

json simple_record(const std::string& id) {
  return {{"id", id},
          {"title", id},
          {"sentences", {"First sentence about " + id + ".", "Second one."}},
          {"first_paragraph_end", 1},
          {"links", json::array()}};
}

}  // namespace

TEST_CASE("corpus: round trip through JSON") {
  Article a = article_from_json(simple_record("x"));
  a.links.push_back({0, 0, 5, "y"});
  CHECK(article_from_json(article_to_json(a)) == a);
}

TEST_CASE("corpus: paragraphs are segmented and links placed") {
  const json rec = {{"id", "p"},
                    {"title", "P"},
                    {"paragraphs", {"Alpha is near Beta. Gamma is far.", "Second paragraph here."}},
                    {"links", {{{"paragraph", 0}, {"start", 14}, {"end", 18}, {"target_id", "beta"}},
                               {{"paragraph", 0}, {"start", 20}, {"end", 25}, {"target_id", "gamma"}}}}};
  const Article a = article_from_json(rec);
  CHECK(a.sentences == std::vector<std::string>{"Alpha is near Beta.", "Gamma is far.", "Second paragraph here."});
  CHECK(a.first_paragraph_end == 2);
  REQUIRE(a.links.size() == 2);
  CHECK(a.links[0] == LinkAnnotation{0, 14, 18, "beta"});
  CHECK(a.links[1] == LinkAnnotation{1, 0, 5, "gamma"});
  CHECK(a.sentences[1].substr(a.links[1].start, 5) == "Gamma");
}

TEST_CASE("corpus: link crossing a sentence boundary is rejected") {
  const json rec = {{"id", "p"},
                    {"title", "P"},
                    {"paragraphs", {"Alpha is near Beta. Gamma is far."}},
                    {"links", {{{"paragraph", 0}, {"start", 14}, {"end", 25}, {"target_id", "x"}}}}};
  CHECK_THROWS_AS(article_from_json(rec), ValidationError);
}

TEST_CASE("corpus: validation failures") {
  json r = simple_record("x");
  r["first_paragraph_end"] = 5;
  CHECK_THROWS_AS(article_from_json(r), ValidationError);

  r = simple_record("x");
  r["links"] = {{{"sentence_index", 0}, {"start", 3}, {"end", 300}, {"target_id", "y"}}};
  CHECK_THROWS_AS(article_from_json(r), ValidationError);

  r = simple_record("x");
  r.erase("title");
  CHECK_THROWS_WITH_AS(article_from_json(r), "missing field 'title'", ValidationError);

  r = simple_record("");
  CHECK_THROWS_AS(article_from_json(r), ValidationError);
}

TEST_CASE("corpus: store lookups and duplicates") {
  ArticleStore store({article_from_json(simple_record("a"))}, {article_from_json(simple_record("b"))});
  CHECK(store.size() == 1);
  CHECK(store.reference_articles().size() == 1);
  CHECK(store.find("b") != nullptr);
  CHECK(store.is_member("a"));
  CHECK_FALSE(store.is_member("b"));
  CHECK(store.find("zzz") == nullptr);
  CHECK(store.resolves({"b", 1}));
  CHECK_FALSE(store.resolves({"b", 2}));
  CHECK(store.sentence({"a", 1}) == "Second one.");
  CHECK_THROWS_AS(store.sentence({"a", 9}), ValidationError);
  CHECK_THROWS_AS(ArticleStore({article_from_json(simple_record("a")), article_from_json(simple_record("a"))}),
                  ValidationError);
}

TEST_CASE("corpus: ingest reports line numbers") {
  TempDir dir;
  testsupport::write_file(dir / "ok.jsonl", simple_record("a").dump() + "\n\n" + simple_record("b").dump() + "\n");
  CHECK(ingest(dir / "ok.jsonl").size() == 2);

  testsupport::write_file(dir / "bad.jsonl", simple_record("a").dump() + "\n{not json\n");
  try {
    ingest(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  testsupport::write_file(dir / "dup.jsonl", simple_record("a").dump() + "\n" + simple_record("a").dump() + "\n");
  try {
    ingest(dir / "dup.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }

  CHECK_THROWS_AS(ingest(dir / "missing.jsonl"), IoError);
}

TEST_CASE("corpus: save and reload is identical") {
  TempDir dir;
  const auto store = testsupport::toy_store();
  save(store, dir / "c.jsonl");
  CHECK(ingest(dir / "c.jsonl") == store);
}

TEST_CASE("corpus: filter_linkable on the toy corpus") {
  const auto store = testsupport::toy_store();
  CHECK(store.size() == 20);
  const auto filtered = filter_linkable(store);
  // Every article is kept as a member or reference article.
  CHECK(filtered.size() + filtered.reference_articles().size() == store.size());
  for (const auto& a : filtered.articles()) {
    bool ok = false;
    const auto fp = first_paragraph(a);
    for (const auto& l : a.links) {
      if (!fp.contains(l.sentence_index)) continue;
      const Article* t = store.find(l.target_id);
      if (!t) continue;
      for (const auto& tl : t->links) ok = ok || store.find(tl.target_id) != nullptr;
    }
    CHECK_MESSAGE(ok, a.id);
  }
  // Black Sea has no links at all and so is never a member.
  CHECK_FALSE(filtered.is_member("black_sea"));
  CHECK(filtered.find("black_sea") != nullptr);
}
