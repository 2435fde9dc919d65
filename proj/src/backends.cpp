#include "polardial/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"
#include "polardial/json_io.hpp"

namespace polardial::backends {
namespace {

thread_local int t_last_retries = 0;

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

bool looks_like_context_overflow(int status, const std::string& body) {
  if (status == 413) return true;
  if (status != 400) return false;
  static const std::regex pattern(R"(context[ _]?(length|window|overflow)|maximum context)", std::regex::icase);
  return std::regex_search(body, pattern);
}

std::string resolve_endpoint(const std::string& endpoint) {
  if (endpoint.rfind("env:", 0) != 0) return endpoint;
  const std::string name = endpoint.substr(4);
  const char* value = std::getenv(name.c_str());
  if (value == nullptr || *value == '\0') throw ConfigError("environment variable " + name + " is not set");
  return value;
}

void require(bool ok, Capability capability, const std::string& what) {
  if (!ok) throw ProtocolError(std::string(to_string(capability)) + " response: " + what);
}

}  // namespace

std::string_view to_string(Capability capability) {
  switch (capability) {
    case Capability::chat: return "chat";
    case Capability::classify: return "classify";
    case Capability::nli: return "nli";
    case Capability::logprob: return "logprob";
    case Capability::scorer: return "scorer";
  }
  return "?";
}

Capability capability_from_string(std::string_view name) {
  for (auto c : {Capability::chat, Capability::classify, Capability::nli, Capability::logprob, Capability::scorer}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown capability '" + std::string(name) + "'");
}

void BackendSpec::validate() const {
  if (!(timeout_s > 0.0)) throw ConfigError("backend " + model_id + ": timeout must be > 0");
  if (max_retries < 0) throw ConfigError("backend " + model_id + ": max_retries must be >= 0");
  if (max_in_flight == 0) throw ConfigError("backend " + model_id + ": max_in_flight must be >= 1");
  if (rate_limit < 0.0) throw ConfigError("backend " + model_id + ": rate_limit must be >= 0");
}

json to_json(const BackendSpec& spec) {
  return json{{"capability", to_string(spec.capability)},
              {"endpoint", spec.endpoint},
              {"model_id", spec.model_id},
              {"timeout_s", spec.timeout_s},
              {"max_retries", spec.max_retries},
              {"rate_limit", spec.rate_limit},
              {"max_in_flight", spec.max_in_flight},
              {"api_key_env", spec.api_key_env},
              {"backoff_base_s", spec.backoff_base_s},
              {"backoff_max_s", spec.backoff_max_s}};
}

BackendSpec spec_from_json(const json& j) {
  BackendSpec spec;
  spec.capability = capability_from_string(j.at("capability").get<std::string>());
  spec.endpoint = j.value("endpoint", "");
  spec.model_id = j.value("model_id", "");
  spec.timeout_s = j.value("timeout_s", spec.timeout_s);
  spec.max_retries = j.value("max_retries", spec.max_retries);
  spec.rate_limit = j.value("rate_limit", spec.rate_limit);
  spec.max_in_flight = j.value("max_in_flight", spec.max_in_flight);
  spec.api_key_env = j.value("api_key_env", "");
  spec.backoff_base_s = j.value("backoff_base_s", spec.backoff_base_s);
  spec.backoff_max_s = j.value("backoff_max_s", spec.backoff_max_s);
  spec.validate();
  return spec;
}

std::string cache_key(Capability capability, std::string_view model_id, const json& payload) {
  std::string material(to_string(capability));
  material += '\n';
  material += model_id;
  material += '\n';
  material += canonical_json(payload);
  return sha256_hex(material);
}

void validate_response(Capability capability, const json& r) {
  require(r.is_object(), capability, "not a JSON object");
  switch (capability) {
    case Capability::chat: {
      require(r.contains("choices") && r["choices"].is_array() && !r["choices"].empty(), capability,
              "missing choices");
      const auto& first = r["choices"][0];
      require(first.contains("message") && first["message"].contains("content") &&
                  first["message"]["content"].is_string(),
              capability, "missing choices[0].message.content");
      break;
    }
    case Capability::classify:
      require(r.contains("label") && r["label"].is_string(), capability, "missing label");
      require(r["label"] == "positive" || r["label"] == "negative", capability,
              "label must be positive|negative, got " + r["label"].get<std::string>());
      require(r.contains("confidence") && r["confidence"].is_number(), capability, "missing confidence");
      break;
    case Capability::nli:
      require(r.contains("label") && r["label"].is_string(), capability, "missing label");
      nli_label_from_string(r["label"].get<std::string>());
      if (r.contains("scores")) {
        require(r["scores"].is_array() && r["scores"].size() == 3, capability, "scores must hold 3 floats");
        for (const auto& s : r["scores"]) require(s.is_number(), capability, "scores must be numeric");
      }
      break;
    case Capability::logprob:
      require(r.contains("token_logprobs") && r["token_logprobs"].is_array(), capability, "missing token_logprobs");
      for (const auto& v : r["token_logprobs"]) {
        require(v.is_number(), capability, "token_logprobs must be numeric");
        require(v.get<double>() <= 0.0, capability, "log-probabilities must be <= 0");
      }
      break;
    case Capability::scorer:
      require(r.contains("score") && r["score"].is_number(), capability, "missing score");
      require(r.contains("scale") && r["scale"].is_array() && r["scale"].size() == 2, capability,
              "scale must be [lo, hi]");
      require(r["scale"][0].get<double>() <= r["scale"][1].get<double>(), capability, "scale lo > hi");
      break;
  }
}

// ---- ResponseCache ---------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::mutex& ResponseCache::stripe(const std::string& key) {
  return write_stripes_[std::hash<std::string>{}(key) % write_stripes_.size()];
}

std::optional<json> ResponseCache::get(const std::string& key) const {
  {
    std::shared_lock lock(map_mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return std::optional<json>(std::in_place, *it->second);
  }
  if (dir_.empty()) return std::nullopt;
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  auto value = std::make_shared<const json>(json::parse(read_text(path)));
  std::unique_lock lock(map_mutex_);
  entries_.try_emplace(key, value);
  return std::optional<json>(std::in_place, *value);
}

void ResponseCache::put(const std::string& key, const json& response) {
  std::lock_guard write_lock(stripe(key));
  if (!dir_.empty()) write_text_atomic(path_for(key), response.dump());
  auto value = std::make_shared<const json>(response);
  std::unique_lock lock(map_mutex_);
  entries_.insert_or_assign(key, std::move(value));
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(map_mutex_);
  return entries_.size();
}

// ---- HTTP --------------------------------------------------------------------

HttpResponse HttplibTransport::post(const std::string& url, const std::string& body,
                                    const std::multimap<std::string, std::string>& headers, double timeout_s) {
  static const std::regex url_re(R"((https?://[^/]+)(/.*)?)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, url_re)) return HttpResponse{0, {}, "malformed url: " + url};
  const std::string base = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client client(base);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers h(headers.begin(), headers.end());
  auto res = client.Post(path, h, body, "application/json");
  if (!res) return HttpResponse{0, {}, httplib::to_string(res.error())};
  return HttpResponse{res->status, res->body, {}};
}

HttpBackend::HttpBackend(BackendSpec spec, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : spec_(std::move(spec)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  spec_.validate();
  if (!transport_) transport_ = std::make_shared<HttplibTransport>();
  if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

int HttpBackend::last_retry_count() { return t_last_retries; }

json HttpBackend::call(const json& request) {
  ++stats_.calls;
  std::multimap<std::string, std::string> headers;
  if (!spec_.api_key_env.empty()) {
    if (const char* key = std::getenv(spec_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const std::string url = resolve_endpoint(spec_.endpoint);
  const std::string body = request.dump();

  HttpResponse last;
  for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++stats_.retries;
      const double delay = std::min(spec_.backoff_max_s, spec_.backoff_base_s * std::pow(2.0, attempt - 1));
      spdlog::debug("{} {}: retry {} after status {} ({}s)", to_string(spec_.capability), spec_.model_id, attempt,
                    last.status, delay);
      sleeper_(std::chrono::duration<double>(delay));
    }
    ++stats_.http_calls;
    last = transport_->post(url, body, headers, spec_.timeout_s);
    if (last.status >= 200 && last.status < 300) {
      json parsed;
      try {
        parsed = json::parse(last.body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(std::string(to_string(spec_.capability)) + " response is not JSON: " + e.what());
      }
      validate_response(spec_.capability, parsed);
      t_last_retries = attempt;
      return parsed;
    }
    if (looks_like_context_overflow(last.status, last.body)) {
      throw ContextOverflowError(last.status, spec_.model_id + ": request exceeds the model context");
    }
    if (!retryable(last.status)) break;
  }
  std::string detail = last.status == 0 ? last.error : last.body.substr(0, 200);
  throw BackendError(last.status, std::string(to_string(spec_.capability)) + " backend " + spec_.model_id +
                                      " failed with status " + std::to_string(last.status) + ": " + detail);
}

// ---- decorators --------------------------------------------------------------

LimitedBackend::LimitedBackend(std::shared_ptr<Backend> inner)
    : inner_(std::move(inner)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, inner_->spec().max_in_flight))) {}

void LimitedBackend::pace() {
  const double rate = inner_->spec().rate_limit;
  if (rate <= 0.0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / rate));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(pace_mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

json LimitedBackend::call(const json& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};
  pace();
  return inner_->call(request);
}

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

json CachedBackend::call(const json& request) {
  ++stats_.calls;
  const auto& spec = inner_->spec();
  const std::string key = cache_key(spec.capability, spec.model_id, request);
  if (auto hit = cache_->get(key)) {
    ++stats_.cache_hits;
    return *hit;
  }
  json response = inner_->call(request);
  validate_response(spec.capability, response);
  cache_->put(key, response);
  return response;
}

// ---- mock --------------------------------------------------------------------

MockBackend::MockBackend(BackendSpec spec) : spec_(std::move(spec)) {}

MockBackend::MockBackend(BackendSpec spec, Generator generator)
    : spec_(std::move(spec)), generator_(std::move(generator)) {}

void MockBackend::script(const json& request, json response) {
  std::lock_guard lock(mutex_);
  script_.insert_or_assign(canonical_json(request), std::move(response));
}

json MockBackend::call(const json& request) {
  const auto start = std::chrono::steady_clock::now();
  json response;
  bool found = false;
  {
    std::lock_guard lock(mutex_);
    if (auto it = script_.find(canonical_json(request)); it != script_.end()) {
      response = it->second;
      found = true;
    }
  }
  if (!found && !generator_) {
    {
      std::lock_guard lock(mutex_);
      log_.push_back(MockCall{request, start, std::chrono::steady_clock::now()});
    }
    throw MockMissError("mock " + std::string(to_string(spec_.capability)) + " backend has no script entry for " +
                        request.dump().substr(0, 200));
  }
  if (!found) response = generator_(request);
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  const auto end = std::chrono::steady_clock::now();
  std::lock_guard lock(mutex_);
  log_.push_back(MockCall{request, start, end});
  return response;
}

std::vector<MockCall> MockBackend::call_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

void MockBackend::clear_log() {
  std::lock_guard lock(mutex_);
  log_.clear();
}

std::size_t max_overlap(const std::vector<MockCall>& log) {
  std::vector<std::pair<std::chrono::steady_clock::time_point, int>> events;
  events.reserve(log.size() * 2);
  for (const auto& c : log) {
    events.emplace_back(c.start, +1);
    events.emplace_back(c.end, -1);
  }
  // Ends sort before starts at equal timestamps: intervals are half-open.
  std::sort(events.begin(), events.end());
  std::size_t best = 0;
  long current = 0;
  for (const auto& [t, delta] : events) {
    current += delta;
    best = std::max<std::size_t>(best, static_cast<std::size_t>(std::max(0L, current)));
  }
  return best;
}

std::shared_ptr<Backend> assemble(std::shared_ptr<Backend> inner, std::shared_ptr<ResponseCache> cache) {
  std::shared_ptr<Backend> limited = std::make_shared<LimitedBackend>(std::move(inner));
  if (!cache) return limited;
  return std::make_shared<CachedBackend>(std::move(limited), std::move(cache));
}

std::shared_ptr<Backend> make_http_backend(const BackendSpec& spec, std::shared_ptr<ResponseCache> cache,
                                           std::shared_ptr<Transport> transport) {
  return assemble(std::make_shared<HttpBackend>(spec, std::move(transport)), std::move(cache));
}

// ---- typed contracts -----------------------------------------------------------

json chat_payload(const ChatRequest& request, std::string_view model_id) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", model_id},
              {"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

std::string chat_complete(Backend& backend, const ChatRequest& request) {
  const json response = backend.call(chat_payload(request, backend.spec().model_id));
  validate_response(Capability::chat, response);
  return response["choices"][0]["message"]["content"].get<std::string>();
}

ClassifierReply classify(Backend& backend, std::string_view text) {
  const json response = backend.call(json{{"text", text}});
  validate_response(Capability::classify, response);
  return ClassifierReply{response["label"].get<std::string>(), response["confidence"].get<double>()};
}

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::entailment: return "entailment";
    case NliLabel::neutral: return "neutral";
    case NliLabel::contradiction: return "contradiction";
  }
  return "?";
}

NliLabel nli_label_from_string(std::string_view name) {
  if (name == "entailment") return NliLabel::entailment;
  if (name == "neutral") return NliLabel::neutral;
  if (name == "contradiction") return NliLabel::contradiction;
  throw ProtocolError("nli response: unknown label '" + std::string(name) + "'");
}

NliReply nli(Backend& backend, std::string_view premise, std::string_view hypothesis) {
  const json response = backend.call(json{{"premise", premise}, {"hypothesis", hypothesis}});
  validate_response(Capability::nli, response);
  NliReply reply;
  reply.label = nli_label_from_string(response["label"].get<std::string>());
  if (response.contains("scores")) reply.scores = response["scores"].get<std::vector<double>>();
  return reply;
}

std::vector<double> token_logprobs(Backend& backend, std::string_view context, std::string_view continuation) {
  const json response = backend.call(json{{"context", context}, {"continuation", continuation}});
  validate_response(Capability::logprob, response);
  return response["token_logprobs"].get<std::vector<double>>();
}

ScorerReply score_response(Backend& backend, const std::vector<std::string>& context, std::string_view response_text) {
  const json response = backend.call(json{{"context", context}, {"response", response_text}});
  validate_response(Capability::scorer, response);
  return ScorerReply{response["score"].get<double>(), response["scale"][0].get<double>(),
                     response["scale"][1].get<double>()};
}

}  // namespace polardial::backends
