#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace polardial::backends {

using json = nlohmann::json;

enum class Capability { chat, classify, nli, logprob, scorer };

std::string_view to_string(Capability capability);
Capability capability_from_string(std::string_view name);

struct BackendSpec {
  Capability capability = Capability::chat;
  std::string endpoint;
  std::string model_id;
  double timeout_s = 60.0;
  int max_retries = 3;
  // Requests per second; 0 disables rate limiting.
  double rate_limit = 0.0;
  std::size_t max_in_flight = 8;
  // Name of the environment variable holding a bearer token, if any.
  std::string api_key_env;
  double backoff_base_s = 0.5;
  double backoff_max_s = 30.0;

  // Throws ConfigError on timeout <= 0, max_retries < 0 or max_in_flight == 0.
  void validate() const;
};

json to_json(const BackendSpec& spec);
BackendSpec spec_from_json(const json& j);

// SHA-256 over (capability, model id, canonical payload).
std::string cache_key(Capability capability, std::string_view model_id, const json& payload);

// Throws ProtocolError when a response does not match the capability's wire contract.
void validate_response(Capability capability, const json& response);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual json call(const json& request) = 0;
  virtual const BackendSpec& spec() const = 0;
};

struct CallStats {
  std::atomic<std::uint64_t> calls{0};
  std::atomic<std::uint64_t> http_calls{0};
  std::atomic<std::uint64_t> cache_hits{0};
  std::atomic<std::uint64_t> retries{0};
};

// Content-addressed response store: <dir>/<key[0:2]>/<key>.json.
// An empty directory path keeps entries in memory only.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir = {});

  std::optional<json> get(const std::string& key) const;
  void put(const std::string& key, const json& response);
  std::size_t size() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::mutex& stripe(const std::string& key);

  std::filesystem::path dir_;
  mutable std::shared_mutex map_mutex_;
  mutable std::unordered_map<std::string, std::shared_ptr<const json>> entries_;
  std::array<std::mutex, 32> write_stripes_;
};

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::multimap<std::string, std::string>& headers, double timeout_s) = 0;
};

// cpp-httplib client; one connection per call.
class HttplibTransport : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body,
                    const std::multimap<std::string, std::string>& headers, double timeout_s) override;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

// Plain HTTP JSON client with exponential backoff on 5xx, 408, 429 and
// transport failures.
class HttpBackend : public Backend {
 public:
  HttpBackend(BackendSpec spec, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

  json call(const json& request) override;
  const BackendSpec& spec() const override { return spec_; }
  const CallStats& stats() const noexcept { return stats_; }
  // Retries used by the most recent successful call on this thread.
  static int last_retry_count();

 private:
  BackendSpec spec_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  CallStats stats_;
};

// Bounds in-flight calls and the request rate of the wrapped backend.
class LimitedBackend : public Backend {
 public:
  explicit LimitedBackend(std::shared_ptr<Backend> inner);

  json call(const json& request) override;
  const BackendSpec& spec() const override { return inner_->spec(); }

 private:
  void pace();

  std::shared_ptr<Backend> inner_;
  std::counting_semaphore<> slots_;
  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

class CachedBackend : public Backend {
 public:
  CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache);

  json call(const json& request) override;
  const BackendSpec& spec() const override { return inner_->spec(); }
  const CallStats& stats() const noexcept { return stats_; }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<ResponseCache> cache_;
  CallStats stats_;
};

struct MockCall {
  json request;
  std::chrono::steady_clock::time_point start;
  std::chrono::steady_clock::time_point end;
};

// Offline backend answering from a script or a generator. Unscripted
// requests raise MockMissError.
class MockBackend : public Backend {
 public:
  using Generator = std::function<json(const json& request)>;

  explicit MockBackend(BackendSpec spec);
  MockBackend(BackendSpec spec, Generator generator);

  // Scripted entries match on canonical request payload and take precedence
  // over the generator.
  void script(const json& request, json response);
  void set_latency(std::chrono::microseconds latency) { latency_ = latency; }

  json call(const json& request) override;
  const BackendSpec& spec() const override { return spec_; }

  std::vector<MockCall> call_log() const;
  std::size_t call_count() const;
  void clear_log();

 private:
  BackendSpec spec_;
  Generator generator_;
  std::map<std::string, json> script_;
  std::chrono::microseconds latency_{0};
  mutable std::mutex mutex_;
  std::vector<MockCall> log_;
};

// Highest number of overlapping [start, end) intervals in a call log.
std::size_t max_overlap(const std::vector<MockCall>& log);

// Cache(Limited(inner)); cache may be null.
std::shared_ptr<Backend> assemble(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache);

// HTTP stack for a spec. The endpoint may be "env:NAME" to read it from the
// environment.
std::shared_ptr<Backend> make_http_backend(const BackendSpec& spec, std::shared_ptr<ResponseCache> cache,
                                           std::shared_ptr<Transport> transport = nullptr);

// ---- typed wire contracts -------------------------------------------------

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 256;
};

json chat_payload(const ChatRequest& request, std::string_view model_id);
std::string chat_complete(Backend& backend, const ChatRequest& request);

struct ClassifierReply {
  std::string label;  // "positive" | "negative"
  double confidence = 0.0;
};
ClassifierReply classify(Backend& backend, std::string_view text);

enum class NliLabel { entailment, neutral, contradiction };
std::string_view to_string(NliLabel label);
NliLabel nli_label_from_string(std::string_view name);

struct NliReply {
  NliLabel label = NliLabel::neutral;
  std::vector<double> scores;
};
NliReply nli(Backend& backend, std::string_view premise, std::string_view hypothesis);

std::vector<double> token_logprobs(Backend& backend, std::string_view context, std::string_view continuation);

struct ScorerReply {
  double score = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
ScorerReply score_response(Backend& backend, const std::vector<std::string>& context, std::string_view response);

}  // namespace polardial::backends
