#include <doctest.h>

#include <atomic>
#include <thread>

#include "errors.hpp"
#include "gateway.hpp"
#include "hashing.hpp"
#include "parallel.hpp"
#include "test_support.hpp"

using namespace attribench;
using testsupport::ScriptedChat;
using testsupport::TempDir;

namespace {

ChatRequest simple_request(const std::string& text) {
  return {"fake-chat", {{Role::user, text}}, 0.0, 64};
}

// Embedding backend whose output can be tampered with per test.
struct RawEmbedding : EmbeddingBackend {
  std::vector<std::vector<double>> reply;
  std::vector<std::vector<double>> embed(const std::string&, std::span<const std::string>) override { return reply; }
};

}  // namespace

TEST_CASE("hashing: sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("gateway: chat request JSON round trip and validation") {
  ChatRequest r{"m", {{Role::system, "s"}, {Role::user, "u"}}, 0.5, 100};
  CHECK(chat_request_from_json(to_json(r)) == r);
  CHECK_THROWS_AS(validate(ChatRequest{}), ValidationError);
  CHECK_THROWS_AS(validate(ChatRequest{"m", {{Role::assistant, "a"}}, 0, 1}), ValidationError);
  CHECK_THROWS_AS(role_from_string("robot"), ValidationError);
}

TEST_CASE("gateway: request hash ignores key order and tracks content") {
  const nlohmann::json a = nlohmann::json::parse(R"({"b":1,"a":[1,2]})");
  const nlohmann::json b = nlohmann::json::parse(R"({"a":[1,2],"b":1})");
  CHECK(request_hash(a) == request_hash(b));
  CHECK(request_hash(simple_request("x")) != request_hash(simple_request("y")));
}

TEST_CASE("gateway: retries transient failures with capped exponential backoff") {
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{"!transient", "!transient", "!transient", "ok"});
  GatewayConfig cfg;
  cfg.retry = {5, std::chrono::milliseconds(100), std::chrono::milliseconds(250)};
  auto gw = testsupport::make_gateway(chat, nullptr, cfg);
  std::vector<long long> delays;
  gw->set_sleeper([&](std::chrono::milliseconds d) { delays.push_back(d.count()); });
  CHECK(gw->chat(simple_request("x")) == "ok");
  CHECK(delays == std::vector<long long>{100, 200, 250});
  CHECK(gw->stats().attempts == 4);
  CHECK(gw->stats().calls == 1);
}

TEST_CASE("gateway: exhausted retries raise TransportError with the attempt count") {
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{"!transient"});
  GatewayConfig cfg;
  cfg.retry.max_attempts = 3;
  auto gw = testsupport::make_gateway(chat, nullptr, cfg);
  try {
    gw->chat(simple_request("x"));
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
  }
  CHECK(chat->calls() == 3);
}

TEST_CASE("gateway: terminal failures are not retried") {
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{"!terminal", "ok"});
  auto gw = testsupport::make_gateway(chat, nullptr);
  CHECK_THROWS_AS(gw->chat(simple_request("x")), EndpointError);
  CHECK(chat->calls() == 1);
}

TEST_CASE("gateway: missing backend is an endpoint error") {
  auto gw = testsupport::make_gateway(nullptr, nullptr);
  CHECK_THROWS_AS(gw->chat(simple_request("x")), EndpointError);
  const std::vector<std::string> in{"a"};
  CHECK_THROWS_AS(gw->embed(in), EndpointError);
}

TEST_CASE("gateway: at most max_in_flight attempts run at once") {
  struct SlowChat : ChatBackend {
    std::atomic<int> now{0}, peak{0};
    std::string complete(const ChatRequest&) override {
      const int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --now;
      return "ok";
    }
  };
  auto chat = std::make_shared<SlowChat>();
  GatewayConfig cfg;
  cfg.max_in_flight = 2;
  auto gw = testsupport::make_gateway(chat, nullptr, cfg);
  parallel_for(24, 8, [&](std::size_t i) { gw->chat(simple_request(std::to_string(i))); });
  CHECK(chat->peak.load() <= 2);
  CHECK(gw->stats().peak_in_flight <= 2);
  CHECK(gw->stats().calls == 24);
}

TEST_CASE("gateway: embeddings are normalized and validated") {
  auto raw = std::make_shared<RawEmbedding>();
  auto gw = testsupport::make_gateway(nullptr, raw);
  const std::vector<std::string> two{"a", "b"};
  raw->reply = {{3, 4}, {0, 2}};
  auto v = gw->embed(two);
  CHECK(v[0].values[0] == doctest::Approx(0.6));
  CHECK(v[0].values[1] == doctest::Approx(0.8));
  CHECK(dot(v[1], v[1]) == doctest::Approx(1.0));

  raw->reply = {{1, 0}};
  CHECK_THROWS_AS(gw->embed(two), EndpointError);
  raw->reply = {{1, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(gw->embed(two), EndpointError);
  raw->reply = {{1, 0}, {0, 0}};
  CHECK_THROWS_AS(gw->embed(two), EndpointError);
  raw->reply = {{1, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(gw->embed(two), EndpointError);  // dimension changed from 2

  GatewayConfig cfg;
  cfg.embed_batch_limit = 1;
  auto limited = testsupport::make_gateway(nullptr, raw, cfg);
  CHECK_THROWS_AS(limited->embed(two), ValidationError);
  CHECK_THROWS_AS(limited->embed(std::span<const std::string>{}), ValidationError);
}

TEST_CASE("gateway: record then replay returns identical responses per occurrence") {
  TempDir dir;
  const auto cassette = dir / "c.jsonl";
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{"first", "second", "third"});
  auto embed = std::make_shared<testsupport::FakeEmbedding>();
  {
    GatewayConfig cfg;
    cfg.mode = CassetteMode::record;
    cfg.cassette = cassette;
    auto gw = testsupport::make_gateway(chat, embed, cfg);
    CHECK(gw->chat(simple_request("same")) == "first");
    CHECK(gw->chat(simple_request("same")) == "second");
    CHECK(gw->chat(simple_request("other")) == "third");
    const std::vector<std::string> in{"hello world"};
    gw->embed(in);
  }
  GatewayConfig cfg;
  cfg.mode = CassetteMode::replay;
  cfg.cassette = cassette;
  auto gw = testsupport::make_gateway(nullptr, nullptr, cfg);
  CHECK(gw->chat(simple_request("same")) == "first");
  CHECK(gw->chat(simple_request("same")) == "second");
  CHECK(gw->chat(simple_request("same")) == "second");  // past the last occurrence
  CHECK(gw->chat(simple_request("other")) == "third");
  const std::vector<std::string> in{"hello world"};
  CHECK(gw->embed(in).size() == 1);
  CHECK(gw->stats().replayed == 5);
  CHECK_THROWS_AS(gw->chat(simple_request("never recorded")), ReplayMissError);
}

TEST_CASE("gateway: cassette configuration errors") {
  GatewayConfig cfg;
  cfg.mode = CassetteMode::replay;
  CHECK_THROWS_AS(testsupport::make_gateway(nullptr, nullptr, cfg), ValidationError);
  cfg.cassette = "/nonexistent/dir/cassette.jsonl";
  CHECK_THROWS_AS(testsupport::make_gateway(nullptr, nullptr, cfg), IoError);
  CHECK_THROWS_AS(cassette_mode_from_string("tape"), ValidationError);
  cfg = {};
  cfg.max_in_flight = 0;
  CHECK_THROWS_AS(testsupport::make_gateway(nullptr, nullptr, cfg), ValidationError);
}
