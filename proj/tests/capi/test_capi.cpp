#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "attribench/attribench.h"
#include "fake_llm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string data(const std::string& name) { return (fs::path(ATTRIBENCH_TEST_DATA_DIR) / name).string(); }

struct Dir {
  fs::path path;
  Dir() {
    static std::atomic<int> n{0};
    path = fs::temp_directory_path() /
           ("attribench-capi-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) + "-" +
            std::to_string(n++));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Takes ownership of a library-allocated string.
json take_json(char* s) {
  REQUIRE(s != nullptr);
  auto j = json::parse(s);
  ab_string_free(s);
  return j;
}

std::size_t line_count(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("capi: version, status names and hashing") {
  CHECK(std::string(ab_version()).size() > 0);
  CHECK(std::string(ab_status_name(AB_OK)) == "ok");
  CHECK(std::string(ab_status_name(AB_ERR_ENDPOINT)) == "endpoint_error");
  char* hex = nullptr;
  REQUIRE(ab_sha256_bytes("abc", 3, &hex) == AB_OK);
  CHECK(std::string(hex) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  ab_string_free(hex);
  CHECK(ab_sha256_file("/nonexistent/file", &hex) == AB_ERR_IO);
  ab_string_free(nullptr);
}

TEST_CASE("capi: argument and parse errors set the last error") {
  ab_store* store = nullptr;
  CHECK(ab_store_load(nullptr, &store) == AB_ERR_INVALID_ARGUMENT);
  CHECK(std::string(ab_last_error()).size() > 0);
  CHECK(ab_store_load("/nonexistent/corpus.jsonl", &store) == AB_ERR_IO);
  Dir dir;
  std::ofstream(dir / "bad.jsonl") << "{\"id\": \"x\"\n";
  CHECK(ab_store_load((dir / "bad.jsonl").c_str(), &store) == AB_ERR_PARSE);
  CHECK(std::string(ab_last_error()).find("line 1") != std::string::npos);
  std::ofstream(dir / "invalid.jsonl") << R"({"id":"x","title":"X","sentences":["A."],"first_paragraph_end":1,"links":[{"sentence_index":5,"start":0,"end":1,"target_id":"y"}]})"
                                       << "\n";
  CHECK(ab_store_load((dir / "invalid.jsonl").c_str(), &store) != AB_OK);
  CHECK(store == nullptr);
  CHECK(ab_store_size(nullptr) == 0);
  ab_store_free(nullptr);
}

TEST_CASE("capi: store load, filter and save") {
  Dir dir;
  ab_store* store = nullptr;
  REQUIRE(ab_store_load(data("toy_corpus.jsonl").c_str(), &store) == AB_OK);
  CHECK(ab_store_size(store) == 20);
  CHECK(ab_store_reference_size(store) == 0);
  ab_store* filtered = nullptr;
  REQUIRE(ab_store_filter(store, &filtered) == AB_OK);
  CHECK(ab_store_size(filtered) + ab_store_reference_size(filtered) == 20);
  CHECK(ab_store_size(filtered) < 20);
  REQUIRE(ab_store_save(store, (dir / "c.jsonl").c_str()) == AB_OK);
  CHECK(line_count(dir / "c.jsonl") == 20);
  CHECK_FALSE(fs::exists(dir / "c.jsonl.partial"));
  ab_store_free(filtered);
  ab_store_free(store);
}

TEST_CASE("capi: gateway configuration errors") {
  ab_gateway* gw = nullptr;
  CHECK(ab_gateway_create("{not json", &gw) == AB_ERR_INVALID_ARGUMENT);
  CHECK(ab_gateway_create(R"({"chat_model":"m","bogus":1})", &gw) == AB_ERR_INVALID_ARGUMENT);
  CHECK(std::string(ab_last_error()).find("bogus") != std::string::npos);
  CHECK(ab_gateway_create(R"({"chat_model":"m"})", &gw) == AB_ERR_INVALID_ARGUMENT);
  CHECK(ab_gateway_create(R"({"mode":"replay"})", &gw) == AB_ERR_INVALID_ARGUMENT);
  CHECK(ab_gateway_create(R"({"chat_url":"http://127.0.0.1:1/x","max_attempts":"three"})", &gw) ==
        AB_ERR_INVALID_ARGUMENT);
  CHECK(gw == nullptr);
}

TEST_CASE("capi: stages end to end against the fake endpoints") {
  fakellm::Server server;
  Dir dir;
  ab_store* raw = nullptr;
  REQUIRE(ab_store_load(data("toy_corpus.jsonl").c_str(), &raw) == AB_OK);
  ab_store* store = nullptr;
  REQUIRE(ab_store_filter(raw, &store) == AB_OK);

  const json gcfg{{"chat_url", server.chat_url()},
                  {"embedding_url", server.embedding_url()},
                  {"chat_model", "fake-chat"},
                  {"embedding_model", "fake-embed"},
                  {"max_in_flight", 2},
                  {"base_delay_ms", 1}};
  ab_gateway* gw = nullptr;
  REQUIRE(ab_gateway_create(gcfg.dump().c_str(), &gw) == AB_OK);

  char* summary = nullptr;
  REQUIRE(ab_sample_contexts(store, R"({"seed":3,"chains":6,"dialogues":2})", (dir / "ctx.jsonl").c_str(),
                             &summary) == AB_OK);
  auto s = take_json(summary);
  CHECK(s.at("chains") == 6);
  CHECK(s.at("dialogues") == 2);
  CHECK(line_count(dir / "ctx.jsonl") == 8);

  CHECK(ab_sample_contexts(store, R"({"chainz":3})", (dir / "x.jsonl").c_str(), nullptr) ==
        AB_ERR_INVALID_ARGUMENT);

  REQUIRE(ab_generate(store, gw, (dir / "ctx.jsonl").c_str(), R"({"workers":2})", (dir / "rec.jsonl").c_str(),
                      (dir / "audit.jsonl").c_str(), &summary) == AB_OK);
  s = take_json(summary);
  CHECK(s.at("contexts") == 8);
  CHECK(s.at("failed_contexts") == 0);
  CHECK(s.at("records") == 6 + 2 * 5);
  CHECK(line_count(dir / "audit.jsonl") == 8);

  REQUIRE(ab_build_index(store, gw, 5, (dir / "idx.bin").c_str(), &summary) == AB_OK);
  take_json(summary);
  REQUIRE(ab_mine_distractors((dir / "rec.jsonl").c_str(), (dir / "idx.bin").c_str(), R"({"seed":1})",
                              (dir / "dis.jsonl").c_str(), &summary) == AB_OK);
  take_json(summary);

  REQUIRE(ab_flag_leaks(data("toy_corpus.jsonl").c_str(), data("toy_test_docs.jsonl").c_str(), nullptr,
                        (dir / "leaks.csv").c_str(), &summary) == AB_OK);
  s = take_json(summary);
  CHECK(slurp(dir / "leaks.csv").find("cologne,test-cologne") != std::string::npos);

  const json aopts{{"seed", 2}, {"leak_report", dir / "leaks.csv"}};
  REQUIRE(ab_assemble(store, (dir / "rec.jsonl").c_str(), (dir / "dis.jsonl").c_str(), aopts.dump().c_str(),
                      (dir / "ds.jsonl").c_str(), (dir / "ds.manifest.json").c_str(), &summary) == AB_OK);
  s = take_json(summary);
  const auto manifest = json::parse(slurp(dir / "ds.manifest.json"));
  CHECK(manifest.at("leakage_report").get<std::string>().rfind("sha256:", 0) == 0);
  CHECK(slurp(dir / "ds.jsonl").find("\"cologne\"") == std::string::npos);

  REQUIRE(ab_export_train((dir / "ds.jsonl").c_str(), nullptr, (dir / "train.jsonl").c_str(),
                          (dir / "train.manifest.json").c_str(), nullptr) == AB_OK);
  CHECK(line_count(dir / "train.jsonl") == line_count(dir / "ds.jsonl"));
  CHECK(ab_export_train((dir / "ds.jsonl").c_str(), "dpo", (dir / "t2.jsonl").c_str(), (dir / "t2.json").c_str(),
                        nullptr) != AB_OK);

  REQUIRE(ab_rephrase(gw, (dir / "ds.jsonl").c_str(), nullptr, (dir / "reph.jsonl").c_str(), &summary) == AB_OK);
  take_json(summary);

  ab_gateway* gws[] = {gw, gw};
  REQUIRE(ab_synatt(gws, 2, (dir / "ds.jsonl").c_str(), nullptr, (dir / "syn.jsonl").c_str(), &summary) == AB_OK);
  take_json(summary);

  REQUIRE(ab_attribute(nullptr, (dir / "ds.jsonl").c_str(), R"({"method":"random","p":0.3,"seed":1})",
                       (dir / "pred_random.jsonl").c_str(), &summary) == AB_OK);
  take_json(summary);
  CHECK(ab_attribute(nullptr, (dir / "ds.jsonl").c_str(), R"({"method":"zero_shot"})",
                     (dir / "x.jsonl").c_str(), nullptr) == AB_ERR_INVALID_ARGUMENT);
  REQUIRE(ab_attribute(gw, (dir / "ds.jsonl").c_str(), R"({"method":"zero_shot"})",
                       (dir / "pred_zs.jsonl").c_str(), &summary) == AB_OK);
  s = take_json(summary);
  CHECK(s.contains("mean_latency_ms"));
  const json topts{{"method", "embed_threshold"}, {"validation", dir / "ds.jsonl"}};
  REQUIRE(ab_attribute(gw, (dir / "ds.jsonl").c_str(), topts.dump().c_str(), (dir / "pred_emb.jsonl").c_str(),
                       &summary) == AB_OK);
  take_json(summary);
  REQUIRE(ab_attribute(gw, (dir / "ds.jsonl").c_str(), R"({"method":"ensemble","members":["a","b","c"]})",
                       (dir / "pred_ens.jsonl").c_str(), &summary) == AB_OK);
  take_json(summary);

  REQUIRE(ab_evaluate((dir / "ds.jsonl").c_str(), (dir / "pred_zs.jsonl").c_str(), "toy", (dir / "zs.csv").c_str(),
                      (dir / "zs.txt").c_str(), &summary) == AB_OK);
  s = take_json(summary);
  REQUIRE(ab_evaluate((dir / "ds.jsonl").c_str(), (dir / "pred_random.jsonl").c_str(), "toy",
                      (dir / "rand.csv").c_str(), nullptr, nullptr) == AB_OK);
  const std::string a = dir / "zs.csv", b = dir / "rand.csv";
  const char* inputs[] = {a.c_str(), b.c_str()};
  REQUIRE(ab_render_report(inputs, 2, (dir / "all.csv").c_str(), (dir / "all.txt").c_str()) == AB_OK);
  CHECK(line_count(dir / "all.csv") == 1 + 6);

  char* stats = nullptr;
  REQUIRE(ab_gateway_stats(gw, &stats) == AB_OK);
  CHECK(take_json(stats).at("calls").get<int>() > 0);

  ab_gateway_free(gw);
  ab_store_free(store);
  ab_store_free(raw);
}

TEST_CASE("capi: endpoint failure leaves a partial output") {
  Dir dir;
  ab_store* raw = nullptr;
  REQUIRE(ab_store_load(data("toy_corpus.jsonl").c_str(), &raw) == AB_OK);
  ab_store* store = nullptr;
  REQUIRE(ab_store_filter(raw, &store) == AB_OK);
  REQUIRE(ab_sample_contexts(store, R"({"chains":2})", (dir / "ctx.jsonl").c_str(), nullptr) == AB_OK);
  ab_gateway* gw = nullptr;
  REQUIRE(ab_gateway_create(
              R"({"chat_url":"http://127.0.0.1:1/v1/chat/completions","chat_model":"m","max_attempts":2,"base_delay_ms":1})",
              &gw) == AB_OK);
  CHECK(ab_generate(store, gw, (dir / "ctx.jsonl").c_str(), nullptr, (dir / "rec.jsonl").c_str(), nullptr,
                    nullptr) == AB_ERR_ENDPOINT);
  CHECK_FALSE(fs::exists(dir / "rec.jsonl"));
  CHECK(fs::exists(dir / "rec.jsonl.partial"));
  ab_gateway_free(gw);
  ab_store_free(store);
  ab_store_free(raw);
}

TEST_CASE("capi: study service lifecycle and analysis") {
  Dir dir;
  ab_study* study = nullptr;
  REQUIRE(ab_study_create(data("study.json").c_str(), (dir / "log.jsonl").c_str(), &study) == AB_OK);
  int port = 0;
  REQUIRE(ab_study_bind(study, "127.0.0.1", 0, &port) == AB_OK);
  CHECK(port > 0);
  std::thread runner([&] { ab_study_run(study); });

  httplib::Client cli("127.0.0.1", port);
  httplib::Result res = cli.Post("/sessions", R"({"participant_id":"p1"})", "application/json");
  for (int i = 0; i < 100 && !res; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    res = cli.Post("/sessions", R"({"participant_id":"p1"})", "application/json");
  }
  REQUIRE(res);
  const std::string id = json::parse(res->body).at("session_id");
  for (int i = 0; i < 6; ++i) {
    const auto trial = json::parse(cli.Get("/sessions/" + id + "/next")->body);
    const json body{{"example_id", trial.at("example_id")}, {"judgment", "correct"}, {"elapsed_ms", 1000 * (i + 1)}};
    CHECK(cli.Post("/sessions/" + id + "/judgments", body.dump(), "application/json")->status == 201);
  }
  const auto csv = cli.Get("/results.csv")->body;
  ab_study_stop(study);
  runner.join();
  ab_study_free(study);

  std::ofstream(dir / "results.csv") << csv;
  char* summary = nullptr;
  REQUIRE(ab_study_analyze(data("study.json").c_str(), (dir / "results.csv").c_str(), (dir / "analysis.csv").c_str(),
                           &summary) == AB_OK);
  CHECK(take_json(summary).at("scenarios").size() == 3);
  CHECK(slurp(dir / "analysis.csv").rfind("scenario,time_s,accuracy_pct\n", 0) == 0);

  CHECK(ab_study_create("/nonexistent.json", nullptr, &study) != AB_OK);
}
