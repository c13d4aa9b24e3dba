#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "study.hpp"
#include "study_server.hpp"
#include "test_support.hpp"

using namespace attribench;
using nlohmann::json;

namespace {

// Study server on a free loopback port for the lifetime of the object.
struct Running {
  StudyService service;
  StudyServer server{service};
  std::thread thread;
  int port = -1;

  Running()
      : service(study_config_from_json(json::parse(testsupport::read_file(testsupport::data_path("study.json"))))) {
    port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen(); });
    server.wait_until_ready();
  }
  ~Running() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("study server: full session over HTTP") {
  Running r;
  httplib::Client cli("127.0.0.1", r.port);
  auto res = cli.Post("/sessions", R"({"participant_id":"dana"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const std::string id = json::parse(res->body).at("session_id");
  res = cli.Post("/sessions", R"({"participant_id":"dana"})", "application/json");
  CHECK(res->status == 200);

  for (int i = 0; i < 6; ++i) {
    res = cli.Get("/sessions/" + id + "/next");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto trial = json::parse(res->body);
    const json body{{"example_id", trial.at("example_id")}, {"judgment", "correct"}, {"elapsed_ms", 1500}};
    res = cli.Post("/sessions/" + id + "/judgments", body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
  }
  res = cli.Get("/sessions/" + id + "/next");
  CHECK(json::parse(res->body).at("done") == true);

  res = cli.Get("/results.csv");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(parse_results_csv(res->body).size() == 6);
}

TEST_CASE("study server: error statuses") {
  Running r;
  httplib::Client cli("127.0.0.1", r.port);
  auto res = cli.Post("/sessions", "{not json", "application/json");
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).contains("error"));
  res = cli.Post("/sessions", R"({"participant_id":""})", "application/json");
  CHECK(res->status == 400);
  res = cli.Get("/sessions/unknown/next");
  CHECK(res->status == 404);

  const std::string id =
      json::parse(cli.Post("/sessions", R"({"participant_id":"eve"})", "application/json")->body).at("session_id");
  const std::string ex = json::parse(cli.Get("/sessions/" + id + "/next")->body).at("example_id");
  res = cli.Post("/sessions/" + id + "/judgments", json{{"example_id", ex}, {"judgment", "maybe"}, {"elapsed_ms", 5}}.dump(),
                 "application/json");
  CHECK(res->status == 400);
  res = cli.Post("/sessions/" + id + "/judgments", json{{"example_id", ex}, {"judgment", "correct"}, {"elapsed_ms", 5}}.dump(),
                 "application/json");
  CHECK(res->status == 201);
  res = cli.Post("/sessions/" + id + "/judgments", json{{"example_id", ex}, {"judgment", "correct"}, {"elapsed_ms", 5}}.dump(),
                 "application/json");
  CHECK(res->status == 409);
}
