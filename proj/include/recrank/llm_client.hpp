#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "recrank/types.hpp"

namespace recrank {

struct GenerationParams {
  int max_tokens = 256;
  double temperature = 0.0;
};

struct LlmEndpointConfig {
  std::string base_url;  // http[s]://host[:port][/path]
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int max_in_flight = 4;
  double initial_backoff_seconds = 0.5;
  GenerationParams params;

  // Wire field names, for services whose JSON shape differs slightly.
  std::string prompt_field = "prompt";
  std::string max_tokens_field = "max_tokens";
  std::string temperature_field = "temperature";
  std::string text_field = "text";

  // Optional credentials header, normally taken from the environment.
  std::string auth_header;
  std::string auth_value;

  // Throws recrank::Error when timeout <= 0, retries < 0 or in-flight < 1.
  void validate() const;

  // Reads RECRANK_LLM_AUTH_HEADER / RECRANK_LLM_AUTH_VALUE when set.
  void apply_environment();
};

struct CompletionRequest {
  UserId user;  // key for scripted mocks and error reports
  std::string prompt;
  GenerationParams params;
};

struct CompletionResponse {
  std::string text;
  double latency_ms = 0.0;
};

enum class LlmErrorKind { Timeout, ServiceError, MalformedResponse };

class LlmError : public Error {
 public:
  LlmError(LlmErrorKind kind, UserId user, std::string detail, int status = 0);

  LlmErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  const UserId& user() const { return user_; }

 private:
  LlmErrorKind kind_;
  int status_;
  UserId user_;
};

std::string_view to_string(LlmErrorKind kind);

// Completion service. Implementations are safe to call from several threads.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

// POST {"prompt", "max_tokens", "temperature"} -> {"text"}. Timeouts,
// connection failures and 5xx are retried with exponential backoff; 4xx and
// malformed bodies are not. At most max_in_flight requests run at once.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(LlmEndpointConfig config);
  ~HttpLlmClient() override;

  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  struct State;
  LlmEndpointConfig config_;
  std::unique_ptr<State> state_;
};

// Echoes the first `count` candidates of a ranking prompt verbatim.
CompletionResponse mock_echo_candidates(const CompletionRequest& request, std::size_t count = 10);

// Returns the scripted text for request.user.
CompletionResponse mock_scripted(const std::map<UserId, std::string>& script,
                                 const CompletionRequest& request);

class EchoCandidatesClient final : public LlmClient {
 public:
  explicit EchoCandidatesClient(std::size_t count = 10) : count_(count) {}
  CompletionResponse complete(const CompletionRequest& request) override {
    return mock_echo_candidates(request, count_);
  }

 private:
  std::size_t count_;
};

class ScriptedClient final : public LlmClient {
 public:
  explicit ScriptedClient(std::map<UserId, std::string> script) : script_(std::move(script)) {}
  CompletionResponse complete(const CompletionRequest& request) override {
    return mock_scripted(script_, request);
  }

 private:
  std::map<UserId, std::string> script_;
};

// Script file: a JSON object {user: text} or JSON-lines {"user", "text"}.
std::map<UserId, std::string> load_script(std::istream& in);

// Decorator appending {user, prompt, text | error, latency_ms} JSON lines.
class TranscriptClient final : public LlmClient {
 public:
  TranscriptClient(LlmClient& inner, std::ostream& sink) : inner_(inner), sink_(sink) {}
  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  LlmClient& inner_;
  std::ostream& sink_;
  std::mutex mutex_;
};

}  // namespace recrank
