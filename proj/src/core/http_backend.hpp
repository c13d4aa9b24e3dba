#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "gateway.hpp"

namespace attribench {

struct HttpEndpoint {
  std::string url;  // full URL, e.g. http://localhost:8000/v1/chat/completions
  std::string api_key_env = "ATTRIBENCH_API_KEY";
  std::chrono::seconds timeout{120};
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};
ParsedUrl parse_url(const std::string& url);

/// POSTs the chat-completion body and reads choices[0].message.content.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpEndpoint endpoint);
  std::string complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  ParsedUrl url_;
};

/// POSTs {"model", "input"} and reads data[*].embedding ordered by index.
class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(HttpEndpoint endpoint);
  std::vector<std::vector<double>> embed(const std::string& model, std::span<const std::string> inputs) override;

 private:
  HttpEndpoint endpoint_;
  ParsedUrl url_;
};

/// Gateway over HTTP backends. Empty URLs leave that backend unset, which is
/// only usable in replay mode.
std::shared_ptr<Gateway> make_http_gateway(GatewayConfig config, const HttpEndpoint& chat,
                                           const HttpEndpoint& embedding);

}  // namespace attribench
