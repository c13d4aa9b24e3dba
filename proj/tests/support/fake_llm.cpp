#include "fake_llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>

namespace fakellm {

using nlohmann::json;

namespace {

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string message(const json& request, const char* role) {
  for (const auto& m : request.at("messages")) {
    if (m.at("role") == role) return m.at("content").get<std::string>();
  }
  return {};
}

std::string line_after(const std::string& text, const std::string& label) {
  const auto pos = text.find(label);
  if (pos == std::string::npos) return {};
  const auto begin = pos + label.size();
  return text.substr(begin, text.find('\n', begin) - begin);
}

std::string multihop_reply(const std::string& user) {
  static const std::regex title(R"(Title: (.*))");
  static const std::regex line(R"(\[(\d+), 0\] (.*))");
  std::vector<std::string> titles;
  json ids = json::array();
  std::string first_sentence;
  for (auto it = std::sregex_iterator(user.begin(), user.end(), title); it != std::sregex_iterator(); ++it) {
    titles.push_back((*it)[1]);
  }
  for (auto it = std::sregex_iterator(user.begin(), user.end(), line); it != std::sregex_iterator(); ++it) {
    ids.push_back({std::stoi((*it)[1]), 0});
    if (first_sentence.empty()) first_sentence = (*it)[2];
  }
  std::string joined;
  for (const auto& t : titles) joined += (joined.empty() ? "" : " and ") + t;
  const auto w = words(first_sentence);
  std::string answer;
  for (std::size_t i = 0; i < std::min<std::size_t>(6, w.size()); ++i) answer += (i ? " " : "") + w[i];
  return json{{"question", "What links " + joined + "?"},
              {"answer", answer},
              {"ids", ids},
              {"reasoning", "Each sentence names the next article in the chain."}}
      .dump();
}

std::string dialogue_reply(const std::string& user) {
  static const std::regex line(R"((?:^|\n)(\d+)\. ([^\n]*))");
  std::vector<std::string> sentences;
  for (auto it = std::sregex_iterator(user.begin(), user.end(), line); it != std::sregex_iterator(); ++it) {
    sentences.push_back((*it)[2]);
  }
  const std::size_t n = std::max<std::size_t>(1, sentences.size());
  json items = json::array();
  for (std::size_t k = 0; k < 5; ++k) {
    std::set<std::size_t> cited{k % n, (k + 2) % n};
    const auto w = words(sentences.empty() ? "" : sentences[k % n]);
    std::string answer;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, w.size()); ++i) answer += (i ? " " : "") + w[i];
    items.push_back({{"question", "Turn " + std::to_string(k + 1) + ": what does the passage say about it?"},
                     {"answer", answer.empty() ? "unknown" : answer},
                     {"sentence_numbers", cited}});
  }
  return items.dump();
}

std::string attribution_reply(const std::string& user) {
  static const std::regex line(R"(\((\d+)\) ([^\n]*))");
  const auto question = line_after(user, "Question: ");
  const auto answer = line_after(user, "Answer: ");
  std::set<std::string> target;
  for (auto& w : words(question + " " + answer)) {
    if (w.size() > 3) target.insert(w);
  }
  std::vector<std::pair<int, int>> scored;  // (-overlap, number)
  const auto context_end = user.find("\nQuestion: ");
  const std::string context = user.substr(0, context_end);
  for (auto it = std::sregex_iterator(context.begin(), context.end(), line); it != std::sregex_iterator(); ++it) {
    int overlap = 0;
    for (auto& w : words((*it)[2].str())) overlap += target.contains(w);
    scored.emplace_back(-overlap, std::stoi((*it)[1]));
  }
  std::sort(scored.begin(), scored.end());
  std::string out;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, scored.size()); ++i) {
    if (i > 0 && scored[i].first == 0) break;
    out += (out.empty() ? "(" : ", (") + std::to_string(scored[i].second) + ")";
  }
  return out.empty() ? "(0)" : out;
}

std::string rephrase_reply(const std::string& user) {
  return json{{"question", line_after(user, "Current question: ")}, {"answer", line_after(user, "Current answer: ")}}
      .dump();
}

enum class Kind { multihop, dialogue, attribution, rephrase, unknown };

Kind kind_of(const json& request) {
  const auto system = message(request, "system");
  if (system.starts_with("You are tasked with generating a concise")) return Kind::multihop;
  if (system.starts_with("You are an AI assistant that generates structured")) return Kind::dialogue;
  if (system.starts_with("You are an AI assistant that identifies")) return Kind::attribution;
  if (system.starts_with("You rewrite one turn")) return Kind::rephrase;
  return Kind::unknown;
}

}  // namespace

std::string chat_reply(const json& request) {
  const auto user = message(request, "user");
  switch (kind_of(request)) {
    case Kind::multihop: return multihop_reply(user);
    case Kind::dialogue: return dialogue_reply(user);
    case Kind::attribution: return attribution_reply(user);
    case Kind::rephrase: return rephrase_reply(user);
    case Kind::unknown: break;
  }
  return "I cannot help with that.";
}

std::vector<double> embedding(std::string_view text, std::size_t dimension) {
  std::vector<double> v(dimension, 0.0);
  v[0] = 0.05;
  for (const auto& w : words(text)) {
    const auto h = fnv(w);
    v[h % dimension] += (h >> 32) & 1 ? 1.0 : -1.0;
  }
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
  return v;
}

struct Server::Impl {
  httplib::Server http;
  Faults faults;
  std::mutex mu;
  std::map<std::string, int> seen;  // request body -> times answered
  std::size_t multihop_distinct = 0;
  std::string authorization;
  std::atomic<int> served{0};
};

Server::Server() : Server(Faults{}) {}

Server::Server(Faults faults) : impl_(std::make_unique<Impl>()) {
  impl_->faults = faults;
  auto& srv = impl_->http;
  auto fault = [this](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(impl_->mu);
      impl_->authorization = req.get_header_value("Authorization");
    }
    if (impl_->served++ < impl_->faults.fail_first) {
      res.status = impl_->faults.fail_status;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return true;
    }
    return false;
  };

  srv.Post("/v1/chat/completions", [this, fault](const httplib::Request& req, httplib::Response& res) {
    ++chat_requests_;
    if (fault(req, res)) return;
    const auto body = json::parse(req.body);
    std::string content = chat_reply(body);
    const Kind kind = kind_of(body);
    {
      std::lock_guard lock(impl_->mu);
      const int times = impl_->seen[req.body]++;
      if (kind == Kind::multihop && times == 0 && impl_->faults.malformed_first_multihop &&
          impl_->multihop_distinct++ % 3 == 0) {
        content = "Sure! Here is the pair: {\"question\": \"unterminated";
      }
    }
    if (kind == Kind::dialogue && impl_->faults.fence_dialogue) content = "```json\n" + content + "\n```";
    json reply{{"id", "fake"},
               {"object", "chat.completion"},
               {"model", body.value("model", "")},
               {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}},
                             {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });

  srv.Post("/v1/embeddings", [this, fault](const httplib::Request& req, httplib::Response& res) {
    ++embedding_requests_;
    if (fault(req, res)) return;
    const auto body = json::parse(req.body);
    json data = json::array();
    const auto& input = body.at("input");
    // Reverse order on the wire; clients must sort by index.
    for (std::size_t i = input.size(); i-- > 0;) {
      data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", embedding(input[i].get<std::string>())}});
    }
    res.set_content(json{{"object", "list"}, {"data", data}}.dump(), "application/json");
  });

  port_ = srv.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

Server::~Server() {
  impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

std::string Server::chat_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

std::string Server::embedding_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings"; }

std::string Server::last_authorization() const {
  std::lock_guard lock(impl_->mu);
  return impl_->authorization;
}

}  // namespace fakellm
