#include <doctest.h>

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fake_llm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = ATTRIBENCH_CLI;

std::string data(const std::string& name) { return (fs::path(ATTRIBENCH_TEST_DATA_DIR) / name).string(); }

struct Dir {
  fs::path path;
  Dir() {
    static std::atomic<int> n{0};
    path = fs::temp_directory_path() /
           ("attribench-cli-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) + "-" +
            std::to_string(n++));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args) {
  Result r;
  FILE* pipe = ::popen((kCli + " " + args + " 2>&1").c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replay_args(const std::string& workdir, const std::string& overrides = "") {
  return "--config " + data("toy_pipeline.conf") + " --set cassette=" + data("cassettes/toy_pipeline.jsonl") +
         overrides +
         " pipeline --corpus " + data("toy_corpus.jsonl") + " --test-docs " + data("toy_test_docs.jsonl") +
         " --workdir " + workdir;
}

}  // namespace

TEST_CASE("cli: version and usage errors exit 1") {
  auto r = run("--version");
  CHECK(r.code == 0);
  r = run("");
  CHECK(r.code == 1);
  r = run("no-such-command");
  CHECK(r.code == 1);
  r = run("ingest --out /tmp/x.jsonl");
  CHECK(r.code == 1);
}

TEST_CASE("cli: invalid config fields are named") {
  Dir dir;
  auto r = run("--set chainz=4 hop-sample --corpus " + data("toy_corpus.jsonl") + " -o " + (dir / "c.jsonl"));
  CHECK(r.code == 1);
  CHECK(r.output.find("chainz") != std::string::npos);

  r = run("--set chains=many hop-sample --corpus " + data("toy_corpus.jsonl") + " -o " + (dir / "c.jsonl"));
  CHECK(r.code == 1);
  CHECK(r.output.find("'chains'") != std::string::npos);

  std::ofstream(dir / "bad.conf") << "# comment\nseed = 3\nmax_hopz = 2\n";
  r = run("--config " + (dir / "bad.conf") + " hop-sample --corpus " + data("toy_corpus.jsonl") + " -o " +
          (dir / "c.jsonl"));
  CHECK(r.code == 1);
  CHECK(r.output.find("max_hopz") != std::string::npos);
}

TEST_CASE("cli: live stage without an endpoint URL is a usage error") {
  Dir dir;
  REQUIRE(run("hop-sample --corpus " + data("toy_corpus.jsonl") + " -o " + (dir / "ctx.jsonl")).code == 0);
  auto r = run("--set chat_model=m generate --corpus " + data("toy_corpus.jsonl") + " --contexts " +
               (dir / "ctx.jsonl") + " -o " + (dir / "rec.jsonl"));
  CHECK(r.code == 1);
  CHECK(r.output.find("chat_url") != std::string::npos);
}

TEST_CASE("cli: endpoint failure exits 3 and leaves a partial output") {
  Dir dir;
  REQUIRE(run("--set chains=2 hop-sample --corpus " + data("toy_corpus.jsonl") + " -o " + (dir / "ctx.jsonl")).code ==
          0);
  auto r = run("--set chat_model=m --set chat_url=http://127.0.0.1:1/v1/chat/completions --set max_attempts=2 "
               "--set base_delay_ms=1 generate --corpus " +
               data("toy_corpus.jsonl") + " --contexts " + (dir / "ctx.jsonl") + " -o " + (dir / "rec.jsonl"));
  CHECK(r.code == 3);
  CHECK_FALSE(fs::exists(dir / "rec.jsonl"));
  CHECK(fs::exists(dir / "rec.jsonl.partial"));
}

TEST_CASE("cli: malformed input is a stage failure") {
  Dir dir;
  std::ofstream(dir / "bad.jsonl") << "{\"id\": 1}\n";
  auto r = run("ingest --corpus " + (dir / "bad.jsonl") + " -o " + (dir / "out.jsonl"));
  CHECK(r.code == 2);
  CHECK(r.output.find("line 1") != std::string::npos);
}

TEST_CASE("cli: stages write run manifests with hashes") {
  Dir dir;
  REQUIRE(run("--seed 5 ingest --corpus " + data("toy_corpus.jsonl") + " --filter -o " + (dir / "c.jsonl")).code == 0);
  const auto m = json::parse(slurp(dir / "c.jsonl.run.json"));
  CHECK(m.at("command") == "ingest");
  CHECK(m.at("seed") == 5);
  CHECK(m.at("config_sha256").get<std::string>().size() == 64);
  REQUIRE(m.at("inputs").size() == 1);
  CHECK(m.at("inputs")[0].at("sha256").get<std::string>().size() == 64);
}

TEST_CASE("cli: replayed pipeline is byte-identical across runs") {
  Dir dir;
  const std::vector<std::string> files{"contexts.jsonl", "records.jsonl", "distractors.jsonl", "leaks.csv",
                                       "dataset.jsonl",  "train.jsonl",   "pipeline.run.json"};
  std::map<std::string, std::string> first;
  for (int i = 0; i < 2; ++i) {
    const std::string work = dir / ("run" + std::to_string(i));
    auto r = run(replay_args(work, i == 1 ? " --set workers=4 --set max_in_flight=4" : ""));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    for (const auto& f : files) {
      const auto bytes = slurp(work + "/" + f);
      CHECK_MESSAGE(!bytes.empty(), f);
      if (i == 0) first[f] = bytes;
      else if (f != "pipeline.run.json") CHECK_MESSAGE(bytes == first[f], f);
    }
  }
  const auto manifest = json::parse(first["pipeline.run.json"]);
  CHECK(manifest.at("summary").at("gateway").at("replayed").get<int>() > 0);
  CHECK(first["leaks.csv"].find("cologne,test-cologne") != std::string::npos);
}

TEST_CASE("cli: recording against the fake server reproduces the committed cassette") {
  Dir dir;
  fakellm::Server::Faults faults;
  faults.malformed_first_multihop = true;
  faults.fence_dialogue = true;
  fakellm::Server server(faults);
  const std::string cassette = dir / "cassette.jsonl";
  auto r = run("--config " + data("toy_pipeline.conf") + " --set mode=record --set cassette=" + cassette +
               " --set chat_url=" + server.chat_url() + " --set embedding_url=" + server.embedding_url() +
               " pipeline --corpus " + data("toy_corpus.jsonl") + " --test-docs " + data("toy_test_docs.jsonl") +
               " --workdir " + (dir / "work"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(cassette) == slurp(data("cassettes/toy_pipeline.jsonl")));
  const auto audit = slurp(dir / "work/generation_audit.jsonl");
  CHECK(audit.find("malformed_output") != std::string::npos);
}

TEST_CASE("cli: downstream evaluation commands") {
  Dir dir;
  const std::string work = dir / "w";
  REQUIRE(run(replay_args(work)).code == 0);
  const std::string ds = work + "/dataset.jsonl";
  auto r = run("--seed 1 attribute --dataset " + ds + " --method random --validation " + ds + " -o " +
               (dir / "pred.jsonl"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run("attribute --dataset " + ds + " --method random -o " + (dir / "p2.jsonl"));
  CHECK(r.code == 1);
  r = run("eval --dataset " + ds + " --predictions " + (dir / "pred.jsonl") + " --name toy -o " +
          (dir / "r.csv") + " --table " + (dir / "r.txt"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "r.csv").find("random,toy,micro,") != std::string::npos);
  r = run("report " + (dir / "r.csv") + " " + (dir / "r.csv") + " -o " + (dir / "all.csv"));
  CHECK(r.code == 0);

  r = run("--config " + data("toy_pipeline.conf") + " --set cassette=" + data("cassettes/toy_pipeline.jsonl") +
          " attribute --dataset " + ds + " --method zero_shot -o " + (dir / "zs.jsonl"));
  CHECK(r.code == 3);  // not in the cassette: replay miss is an endpoint failure
}

TEST_CASE("cli: study-serve and study-analyze") {
  Dir dir;
  int out_pipe[2];
  REQUIRE(::pipe(out_pipe) == 0);
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(out_pipe[0]);
    const std::string study = data("study.json");
    const std::string log = dir / "log.jsonl";
    ::execl(kCli.c_str(), kCli.c_str(), "study-serve", "--study", study.c_str(), "--log", log.c_str(), "--port", "0",
            static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  std::string line;
  char c;
  while (::read(out_pipe[0], &c, 1) == 1 && c != '\n') line += c;
  ::close(out_pipe[0]);
  const auto colon = line.rfind(':');
  REQUIRE_MESSAGE(colon != std::string::npos, line);
  const int port = std::stoi(line.substr(colon + 1));

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/sessions", R"({"participant_id":"p1"})", "application/json");
  REQUIRE(res);
  const std::string id = json::parse(res->body).at("session_id");
  for (int i = 0; i < 6; ++i) {
    const auto trial = json::parse(cli.Get("/sessions/" + id + "/next")->body);
    const json body{{"example_id", trial.at("example_id")}, {"judgment", "incorrect"}, {"elapsed_ms", 2000}};
    CHECK(cli.Post("/sessions/" + id + "/judgments", body.dump(), "application/json")->status == 201);
  }
  const auto csv = cli.Get("/results.csv")->body;
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);

  std::ofstream(dir / "results.csv") << csv;
  auto r = run("study-analyze --study " + data("study.json") + " --results " + (dir / "results.csv") + " -o " +
               (dir / "analysis.csv"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "analysis.csv") ==
        "scenario,time_s,accuracy_pct\nNo alignment,2.0,50.0\nBaseline,2.0,50.0\nSynQA,2.0,50.0\n");
}
