#include "recrank/llm_client.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "recrank/instructgen.hpp"
#include "recrank/text.hpp"

namespace recrank {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(fmt::format("LLM base URL '{}' has no scheme", url));
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void LlmEndpointConfig::validate() const {
  if (!(timeout_seconds > 0)) throw Error("LLM timeout must be positive");
  if (max_retries < 0) throw Error("LLM max_retries must be non-negative");
  if (max_in_flight < 1) throw Error("LLM max_in_flight must be at least 1");
}

void LlmEndpointConfig::apply_environment() {
  if (const char* h = std::getenv("RECRANK_LLM_AUTH_HEADER")) auth_header = h;
  if (const char* v = std::getenv("RECRANK_LLM_AUTH_VALUE")) auth_value = v;
}

LlmError::LlmError(LlmErrorKind kind, UserId user, std::string detail, int status)
    : Error(fmt::format("{} for user {}: {}", to_string(kind), user, detail)),
      kind_(kind),
      status_(status),
      user_(std::move(user)) {}

std::string_view to_string(LlmErrorKind kind) {
  switch (kind) {
    case LlmErrorKind::Timeout: return "Timeout";
    case LlmErrorKind::ServiceError: return "ServiceError";
    case LlmErrorKind::MalformedResponse: return "MalformedResponse";
  }
  return "Unknown";
}

struct HttpLlmClient::State {
  explicit State(int permits) : in_flight(permits) {}
  std::counting_semaphore<4096> in_flight;
  ParsedUrl url;
};

HttpLlmClient::HttpLlmClient(LlmEndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  state_ = std::make_unique<State>(std::min(config_.max_in_flight, 4096));
  state_->url = parse_url(config_.base_url);
}

HttpLlmClient::~HttpLlmClient() = default;

CompletionResponse HttpLlmClient::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw LlmError(LlmErrorKind::MalformedResponse, request.user, "empty prompt");

  json body;
  body[config_.prompt_field] = request.prompt;
  body[config_.max_tokens_field] = request.params.max_tokens;
  body[config_.temperature_field] = request.params.temperature;
  const std::string payload = body.dump();

  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  std::optional<LlmError> last;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double backoff = config_.initial_backoff_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    }
    httplib::Result result{nullptr, httplib::Error::Unknown};
    const auto start = std::chrono::steady_clock::now();
    {
      state_->in_flight.acquire();
      struct Release {
        std::counting_semaphore<4096>& s;
        ~Release() { s.release(); }
      } release{state_->in_flight};

      httplib::Client client(state_->url.origin);
      client.set_connection_timeout(timeout_us);
      client.set_read_timeout(timeout_us);
      client.set_write_timeout(timeout_us);
      httplib::Headers headers;
      if (!config_.auth_header.empty()) headers.emplace(config_.auth_header, config_.auth_value);
      result = client.Post(state_->url.path, headers, payload, "application/json");
    }

    if (!result) {
      const auto err = result.error();
      if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
        last.emplace(LlmErrorKind::Timeout, request.user, fmt::format("no response within {}s", config_.timeout_seconds));
      } else {
        last.emplace(LlmErrorKind::ServiceError, request.user, fmt::format("transport error: {}", httplib::to_string(err)));
      }
      spdlog::debug("LLM attempt {} failed: {}", attempt + 1, last->what());
      continue;
    }
    const int status = result->status;
    if (status >= 500) {
      last.emplace(LlmErrorKind::ServiceError, request.user, fmt::format("HTTP {}", status), status);
      continue;
    }
    if (status != 200) {
      throw LlmError(LlmErrorKind::ServiceError, request.user, fmt::format("HTTP {} (not retried)", status), status);
    }
    const json reply = json::parse(result->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains(config_.text_field) ||
        !reply[config_.text_field].is_string()) {
      throw LlmError(LlmErrorKind::MalformedResponse, request.user,
                     fmt::format("response lacks a string '{}' field", config_.text_field));
    }
    return CompletionResponse{reply[config_.text_field].get<std::string>(), elapsed_ms(start)};
  }
  throw *last;
}

CompletionResponse mock_echo_candidates(const CompletionRequest& request, std::size_t count) {
  const std::string_view prompt = request.prompt;
  const auto spans = text::quoted_spans(prompt);
  // The candidate list is the run of quoted items after the last lead phrase
  // that is not itself inside a quoted item.
  std::size_t first = spans.size();
  std::size_t gap_start = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto start = static_cast<std::size_t>(spans[i].data() - prompt.data());
    if (prompt.substr(gap_start, start - gap_start).find(kCandidatesLead) != std::string_view::npos) first = i;
    gap_start = start + spans[i].size();
  }
  if (first == spans.size()) {
    throw LlmError(LlmErrorKind::MalformedResponse, request.user, "prompt has no parseable candidate list");
  }
  std::string out;
  for (std::size_t i = first, n = 0; i < spans.size() && n < count; ++i, ++n) {
    if (n > 0) out += ", ";
    out += spans[i];
  }
  return CompletionResponse{std::move(out), 0.0};
}

CompletionResponse mock_scripted(const std::map<UserId, std::string>& script, const CompletionRequest& request) {
  const auto it = script.find(request.user);
  if (it == script.end()) {
    throw LlmError(LlmErrorKind::MalformedResponse, request.user, "no scripted completion for this user");
  }
  return CompletionResponse{it->second, 0.0};
}

std::map<UserId, std::string> load_script(std::istream& in) {
  const std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::map<UserId, std::string> out;
  const json whole = json::parse(contents, nullptr, false);
  if (!whole.is_discarded() && whole.is_object() && !whole.contains("user")) {
    for (const auto& [user, value] : whole.items()) {
      if (!value.is_string()) throw Error(fmt::format("script entry for {} is not a string", user));
      out.emplace(user, value.get<std::string>());
    }
    return out;
  }
  std::size_t number = 0;
  for (auto line : text::split(contents, "\n")) {
    ++number;
    if (text::trim(line).empty()) continue;
    const json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("user") || !record.contains("text")) {
      throw Error(fmt::format("script line {}: expected {{\"user\", \"text\"}}", number));
    }
    out[record["user"].get<UserId>()] = record["text"].get<std::string>();
  }
  return out;
}

CompletionResponse TranscriptClient::complete(const CompletionRequest& request) {
  json record;
  record["user"] = request.user;
  record["prompt"] = request.prompt;
  record["temperature"] = request.params.temperature;
  try {
    auto response = inner_.complete(request);
    record["text"] = response.text;
    record["latency_ms"] = response.latency_ms;
    std::lock_guard lock(mutex_);
    sink_ << record.dump() << '\n';
    return response;
  } catch (const LlmError& e) {
    record["error"] = e.what();
    std::lock_guard lock(mutex_);
    sink_ << record.dump() << '\n';
    throw;
  }
}

}  // namespace recrank
