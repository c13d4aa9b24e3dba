#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace attribench {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;

  bool operator==(const ChatRequest&) const = default;
};

/// At least one message, and the first one is a system or user message.
void validate(const ChatRequest& request);

/// Wire body in the common chat-completion schema.
nlohmann::json to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const nlohmann::json& j);

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
/// Throws ValidationError for a zero vector.
EmbeddingVector normalized(std::vector<double> values);

/// Hash of the canonical serialization used as the cassette key.
std::string request_hash(const nlohmann::json& canonical_request);
std::string request_hash(const ChatRequest& request);

// Backends perform one attempt. They throw TransientError for failures worth
// retrying and EndpointError for terminal ones.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  /// Raw (unnormalized) vectors, one per input, in input order.
  virtual std::vector<std::vector<double>> embed(const std::string& model,
                                                 std::span<const std::string> inputs) = 0;
};

enum class CassetteMode { live, record, replay };
std::string_view to_string(CassetteMode mode);
CassetteMode cassette_mode_from_string(std::string_view s);

// Line-delimited {"hash", "request", "response"} records. A request issued more
// than once (a generation retry, say) is recorded once per occurrence and
// replayed in the same order; replay past the last recorded occurrence keeps
// serving the last one.
class Cassette {
 public:
  Cassette() = default;
  Cassette(const Cassette&) = delete;
  Cassette& operator=(const Cassette&) = delete;

  /// Reads every record of an existing cassette file.
  void load(const std::filesystem::path& path);
  /// Starts a fresh recording: truncates `path` and appends to it from now on.
  void record_to(const std::filesystem::path& path);

  /// Response for the `occurrence`-th issue of `hash`, or null.
  std::optional<nlohmann::json> lookup(const std::string& hash, std::size_t occurrence) const;
  void append(const std::string& hash, const nlohmann::json& request, const nlohmann::json& response);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<nlohmann::json>> responses_;
  std::size_t count_ = 0;
  std::filesystem::path path_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
};

struct GatewayConfig {
  std::string chat_model;
  std::string embedding_model;
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  std::size_t embed_batch_limit = 64;
  CassetteMode mode = CassetteMode::live;
  std::filesystem::path cassette;
  double generation_temperature = 0.7;
  double attribution_temperature = 0.0;
  int max_tokens = 1024;
};

struct GatewayStats {
  std::size_t calls = 0;
  std::size_t attempts = 0;
  std::size_t replayed = 0;
  std::size_t peak_in_flight = 0;
};

// Shared transport to chat and embedding endpoints. Thread-safe; at most
// config.max_in_flight backend attempts run at once. Replay mode never touches
// a backend, so backends may be null there.
class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<ChatBackend> chat,
          std::shared_ptr<EmbeddingBackend> embedding);

  std::string chat(const ChatRequest& request);
  /// One unit-normalized vector per input, in input order.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);

  const GatewayConfig& config() const { return config_; }
  GatewayStats stats() const;

  /// Replaces the backoff sleep; tests use it to observe delays without waiting.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 private:
  template <class Fn>
  auto with_retries(Fn&& attempt) -> decltype(attempt());
  nlohmann::json replay_or_call(const std::string& hash, const nlohmann::json& canonical,
                                const std::function<nlohmann::json()>& call);

  GatewayConfig config_;
  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<EmbeddingBackend> embedding_;
  Cassette cassette_;
  std::counting_semaphore<1 << 20> slots_;
  std::function<void(std::chrono::milliseconds)> sleeper_;

  mutable std::mutex mu_;
  std::unordered_map<std::string, std::size_t> occurrences_;
  std::size_t embedding_dimension_ = 0;
  GatewayStats stats_;
  std::size_t in_flight_ = 0;
};

}  // namespace attribench
