#include "gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "errors.hpp"
#include "hashing.hpp"

namespace attribench {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ValidationError("unknown chat role '" + std::string(s) + "'");
}

std::string_view to_string(CassetteMode mode) {
  switch (mode) {
    case CassetteMode::live: return "live";
    case CassetteMode::record: return "record";
    case CassetteMode::replay: return "replay";
  }
  return "live";
}

CassetteMode cassette_mode_from_string(std::string_view s) {
  if (s == "live") return CassetteMode::live;
  if (s == "record") return CassetteMode::record;
  if (s == "replay") return CassetteMode::replay;
  throw ValidationError("unknown gateway mode '" + std::string(s) + "' (live, record, replay)");
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request has no messages");
  if (request.messages.front().role == Role::assistant) {
    throw ValidationError("first chat message must be a system or user message");
  }
}

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", request.model},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

ChatRequest chat_request_from_json(const json& j) {
  ChatRequest r;
  r.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                          m.at("content").get<std::string>()});
  }
  r.temperature = j.value("temperature", 0.0);
  r.max_tokens = j.value("max_tokens", 1024);
  return r;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) throw ValidationError("embedding dimensions differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) sum += a.values[i] * b.values[i];
  return sum;
}

EmbeddingVector normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) throw ValidationError("cannot normalize a zero or non-finite vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
  return {std::move(values)};
}

std::string request_hash(const json& canonical_request) {
  return sha256_hex(canonical_json(canonical_request));
}

std::string request_hash(const ChatRequest& request) {
  return request_hash(json{{"kind", "chat"}, {"request", to_json(request)}});
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<ChatBackend> chat,
                 std::shared_ptr<EmbeddingBackend> embedding)
    : config_(std::move(config)),
      chat_(std::move(chat)),
      embedding_(std::move(embedding)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight))),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (config_.retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be >= 1");
  if (config_.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  switch (config_.mode) {
    case CassetteMode::replay:
      if (config_.cassette.empty()) throw ValidationError("replay mode requires a cassette file");
      cassette_.load(config_.cassette);
      break;
    case CassetteMode::record:
      if (config_.cassette.empty()) throw ValidationError("record mode requires a cassette path");
      cassette_.record_to(config_.cassette);
      break;
    case CassetteMode::live:
      break;
  }
}

void Gateway::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  sleeper_ = std::move(sleeper);
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

template <class Fn>
auto Gateway::with_retries(Fn&& attempt) -> decltype(attempt()) {
  const auto& policy = config_.retry;
  std::string last;
  for (int n = 1;; ++n) {
    slots_.acquire();
    {
      std::lock_guard lock(mu_);
      ++stats_.attempts;
      stats_.peak_in_flight = std::max(stats_.peak_in_flight, ++in_flight_);
    }
    auto release = [&] {
      {
        std::lock_guard lock(mu_);
        --in_flight_;
      }
      slots_.release();
    };
    try {
      auto result = attempt();
      release();
      return result;
    } catch (const TransientError& e) {
      release();
      last = e.what();
    } catch (...) {
      release();
      throw;
    }
    if (n >= policy.max_attempts) {
      throw TransportError("request failed after " + std::to_string(n) + " attempts: " + last, n);
    }
    auto delay = policy.base_delay * (1LL << std::min(n - 1, 20));
    sleeper_(std::min<std::chrono::milliseconds>(delay, policy.max_delay));
  }
}

json Gateway::replay_or_call(const std::string& hash, const json& canonical,
                             const std::function<json()>& call) {
  std::size_t occurrence;
  {
    std::lock_guard lock(mu_);
    occurrence = occurrences_[hash]++;
    ++stats_.calls;
  }
  if (config_.mode == CassetteMode::replay) {
    auto hit = cassette_.lookup(hash, occurrence);
    if (!hit) throw ReplayMissError(hash);
    std::lock_guard lock(mu_);
    ++stats_.replayed;
    return *hit;
  }
  json response = call();
  if (config_.mode == CassetteMode::record) cassette_.append(hash, canonical, response);
  return response;
}

std::string Gateway::chat(const ChatRequest& request) {
  validate(request);
  const json canonical{{"kind", "chat"}, {"request", to_json(request)}};
  const json response = replay_or_call(request_hash(canonical), canonical, [&] {
    if (!chat_) throw EndpointError(0, "no chat endpoint configured");
    return json{{"content", with_retries([&] { return chat_->complete(request); })}};
  });
  if (!response.contains("content") || !response["content"].is_string()) {
    throw EndpointError(0, "cassette response has no content");
  }
  return response["content"].get<std::string>();
}

std::vector<EmbeddingVector> Gateway::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embedding batch is empty");
  if (texts.size() > config_.embed_batch_limit) {
    throw ValidationError("embedding batch of " + std::to_string(texts.size()) + " exceeds limit " +
                          std::to_string(config_.embed_batch_limit));
  }
  const std::vector<std::string> inputs(texts.begin(), texts.end());
  const json canonical{{"kind", "embedding"}, {"model", config_.embedding_model}, {"input", inputs}};
  const json response = replay_or_call(request_hash(canonical), canonical, [&] {
    if (!embedding_) throw EndpointError(0, "no embedding endpoint configured");
    return json{{"vectors", with_retries([&] { return embedding_->embed(config_.embedding_model, inputs); })}};
  });

  const auto raw = response.at("vectors").get<std::vector<std::vector<double>>>();
  if (raw.size() != inputs.size()) {
    throw EndpointError(0, "embedding endpoint returned " + std::to_string(raw.size()) + " vectors for " +
                               std::to_string(inputs.size()) + " inputs");
  }
  const std::size_t dim = raw.front().size();
  for (const auto& v : raw) {
    if (v.size() != dim) throw EndpointError(0, "embedding dimension mismatch within a batch");
  }
  {
    std::lock_guard lock(mu_);
    if (embedding_dimension_ == 0) embedding_dimension_ = dim;
    if (dim != embedding_dimension_) {
      throw EndpointError(0, "embedding dimension changed from " + std::to_string(embedding_dimension_) +
                                 " to " + std::to_string(dim));
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (const auto& v : raw) {
    try {
      out.push_back(normalized(v));
    } catch (const ValidationError& e) {
      throw EndpointError(0, std::string("embedding endpoint returned an unusable vector: ") + e.what());
    }
  }
  return out;
}

}  // namespace attribench
