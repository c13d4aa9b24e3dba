#include "http_backend.hpp"

#include <algorithm>
#include <cstdlib>

#include <httplib.h>

#include "errors.hpp"

namespace attribench {

using nlohmann::json;

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("URL without scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ValidationError("unsupported URL scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

namespace {

httplib::Headers auth_headers(const HttpEndpoint& ep) {
  httplib::Headers headers;
  if (!ep.api_key_env.empty()) {
    if (const char* key = std::getenv(ep.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  return headers;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 300;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

json post_json(const HttpEndpoint& ep, const ParsedUrl& url, const json& body) {
  httplib::Client client(url.origin);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  auto res = client.Post(url.path, auth_headers(ep), body.dump(), "application/json");
  if (!res) {
    throw TransientError("POST " + ep.url + ": " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    const std::string what = "POST " + ep.url + " returned HTTP " + std::to_string(res->status) + ": " +
                             excerpt(res->body);
    if (transient_status(res->status)) throw TransientError(what);
    throw EndpointError(res->status, what);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw EndpointError(res->status, "non-JSON response from " + ep.url + ": " + excerpt(res->body));
  }
}

}  // namespace

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(parse_url(endpoint_.url)) {}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  const json reply = post_json(endpoint_, url_, to_json(request));
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw EndpointError(200, "chat response without choices[0].message.content: " + excerpt(reply.dump()));
  }
}

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(parse_url(endpoint_.url)) {}

std::vector<std::vector<double>> HttpEmbeddingBackend::embed(const std::string& model,
                                                             std::span<const std::string> inputs) {
  const json reply = post_json(endpoint_, url_, {{"model", model}, {"input", inputs}});
  try {
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    for (const auto& item : reply.at("data")) {
      rows.emplace_back(item.value("index", rows.size()), item.at("embedding").get<std::vector<double>>());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
  } catch (const json::exception&) {
    throw EndpointError(200, "embedding response without data[*].embedding: " + excerpt(reply.dump()));
  }
}

std::shared_ptr<Gateway> make_http_gateway(GatewayConfig config, const HttpEndpoint& chat,
                                           const HttpEndpoint& embedding) {
  std::shared_ptr<ChatBackend> chat_backend;
  std::shared_ptr<EmbeddingBackend> embed_backend;
  if (config.mode != CassetteMode::replay) {
    if (!chat.url.empty()) chat_backend = std::make_shared<HttpChatBackend>(chat);
    if (!embedding.url.empty()) embed_backend = std::make_shared<HttpEmbeddingBackend>(embedding);
  }
  return std::make_shared<Gateway>(std::move(config), std::move(chat_backend), std::move(embed_backend));
}

}  // namespace attribench
