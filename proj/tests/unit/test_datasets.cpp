#include <doctest.h>

#include "datasets.hpp"
#include "errors.hpp"
#include "prompts.hpp"
#include "test_support.hpp"

using namespace attribench;
using testsupport::TempDir;

namespace {

GeneratedRecord hop_record() {
  HopChain chain{{{"danube", 2}, {"vienna", 0}}, {"danube", "vienna"}};
  return {"hop-1", chain, {"Which capital lies on the Danube?", "Vienna.", {{"danube", 2}, {"vienna", 0}}, "r", {}},
          "fake-chat", "hash"};
}

GeneratedRecord dialogue_record() {
  return {"dlg-1", DialogueContext{"vienna", {0, 2}},
          {"Where does it lie?", "On the Danube.", {{"vienna", 1}}, std::nullopt, {{"What is Vienna?", "A capital."}}},
          "fake-chat", "hash"};
}

}  // namespace

TEST_CASE("datasets: assembled sample maps gold refs onto shuffled documents") {
  const auto store = testsupport::toy_store();
  const std::vector<std::string> distractors{"rhine", "berlin"};
  const auto sample = assemble_sample(hop_record(), store, distractors, {11, true});
  CHECK(sample.kind == SampleKind::multi_hop);
  CHECK(sample.documents.size() == 4);
  CHECK(check_sample(sample).empty());
  CHECK(sample.provenance.distractor_ids == distractors);
  CHECK(sample.gold.size() == 2);
  for (const auto& g : sample.gold) {
    const auto& doc = sample.documents[g.document];
    CHECK((doc.article_id == "danube" || doc.article_id == "vienna"));
    CHECK(doc.sentences[g.sentence] == store.sentence({doc.article_id, g.sentence}));
  }
  // Documents are first paragraphs only.
  for (const auto& d : sample.documents) CHECK(d.sentences.size() == first_paragraph(store.at(d.article_id)).size());
  CHECK(assemble_sample(hop_record(), store, distractors, {11, true}) == sample);
}

TEST_CASE("datasets: distractor equal to a source is rejected") {
  const auto store = testsupport::toy_store();
  const std::vector<std::string> bad{"vienna"};
  CHECK_THROWS_AS(assemble_sample(hop_record(), store, bad, {}), ValidationError);
}

TEST_CASE("datasets: dialogue distractors can be switched off") {
  const auto store = testsupport::toy_store();
  const std::vector<std::string> distractors{"rhine"};
  CHECK(assemble_sample(dialogue_record(), store, distractors, {1, false}).documents.size() == 1);
  CHECK(assemble_sample(dialogue_record(), store, distractors, {1, true}).documents.size() == 2);
}

TEST_CASE("datasets: gold outside the first paragraph fails assembly") {
  const auto store = testsupport::toy_store();
  auto rec = hop_record();
  rec.qa.attributions = {{"danube", 5}};
  CHECK_THROWS(assemble_sample(rec, store, {}, {}));
}

TEST_CASE("datasets: save and load round trip with validation") {
  TempDir dir;
  const auto store = testsupport::toy_store();
  const std::vector<GeneratedRecord> records{hop_record(), dialogue_record()};
  const auto samples = assemble(records, store, {{"hop-1", {"rhine"}}}, {3, true});
  save_samples(samples, dir / "d.jsonl");
  CHECK(load_samples(dir / "d.jsonl") == samples);

  auto j = sample_to_json(samples[0]);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(sample_from_json(j), ValidationError);
  j = sample_to_json(samples[0]);
  j["gold"] = {{0, 99}};
  CHECK_THROWS_AS(sample_from_json(j), ValidationError);

  const auto line = sample_to_json(samples[0]).dump();
  testsupport::write_file(dir / "dup.jsonl", line + "\n" + line + "\n");
  CHECK_THROWS(load_samples(dir / "dup.jsonl"));
}

TEST_CASE("datasets: target string and export record") {
  const auto store = testsupport::toy_store();
  const auto sample = assemble_sample(dialogue_record(), store, {}, {});
  CHECK(target_string(sample) == "(1)");
  const auto rec = export_record(sample);
  CHECK(rec.at("target") == "(1)");
  const auto prompt = render_attribution_prompt(sample.documents, sample.qa.question, sample.qa.answer,
                                                sample.qa.dialogue_history, {});
  CHECK(rec.at("messages").size() == 2);
  CHECK(rec.at("messages")[1].at("content") == prompt.messages[1].content);
  CHECK(rec.at("messages")[1].at("content").get<std::string>().find("Conversation history") != std::string::npos);

  // Re-parsing the target recovers the gold set.
  const SentenceNumbering numbering(sample.documents);
  std::set<DocSentRef> reparsed;
  for (auto n : extract_sentence_numbers(target_string(sample)).numbers) reparsed.insert(*numbering.ref(n));
  CHECK(reparsed == sample.gold);
}

TEST_CASE("datasets: manifests") {
  TempDir dir;
  const auto store = testsupport::toy_store();
  const std::vector<GeneratedRecord> records{hop_record(), dialogue_record()};
  const auto samples = assemble(records, store, {}, {});
  const auto m = dataset_manifest(samples, {5, std::string("sha256:abc")});
  CHECK(m.at("samples") == 2);
  CHECK(m.at("kinds").at("multi_hop") == 1);
  CHECK(m.at("kinds").at("dialogue") == 1);
  CHECK(m.at("seed") == 5);
  CHECK(m.at("leakage_report") == "sha256:abc");

  export_train(samples, "chat_sft", dir / "t.jsonl", dir / "t.manifest.json");
  const auto hp = nlohmann::json::parse(testsupport::read_file(dir / "t.manifest.json")).at("hyperparameters");
  CHECK(hp.at("lora_alpha") == 64);
  CHECK(hp.at("lora_rank") == 32);
  CHECK(hp.at("learning_rate") == 1e-5);
  CHECK(hp.at("weight_decay") == 1e-3);
  CHECK(hp.at("passes") == 1);
  CHECK_THROWS_AS(export_train(samples, "dpo", dir / "x.jsonl", dir / "x.json"), ValidationError);
}
