#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <deque>
#include <thread>

#include <httplib.h>

#include "polardial/backends.hpp"
#include "polardial/error.hpp"
#include "polardial/parallel.hpp"
#include "support.hpp"

using namespace polardial;
using namespace polardial::backends;
using testing::spec;

namespace {

// Replays canned HTTP responses in order and records each request.
class FakeTransport : public Transport {
 public:
  explicit FakeTransport(std::deque<HttpResponse> replies) : replies_(std::move(replies)) {}
  HttpResponse post(const std::string& url, const std::string& body, const std::multimap<std::string, std::string>& h,
                    double) override {
    urls.push_back(url);
    bodies.push_back(body);
    headers = h;
    if (replies_.empty()) return {500, "exhausted", {}};
    auto r = replies_.front();
    replies_.pop_front();
    return r;
  }
  std::vector<std::string> urls;
  std::vector<std::string> bodies;
  std::multimap<std::string, std::string> headers;

 private:
  std::deque<HttpResponse> replies_;
};

BackendSpec http_spec(Capability c, int retries = 3) {
  BackendSpec s = spec(c, "m");
  s.endpoint = "http://localhost:1/v1";
  s.max_retries = retries;
  return s;
}

const std::string kNliOk = R"({"label": "entailment"})";

}  // namespace

TEST_CASE("cache keys") {
  const json a = {{"premise", "a  b"}, {"hypothesis", "c"}};
  const json b = {{"hypothesis", "c"}, {"premise", " a b "}};
  CHECK(cache_key(Capability::nli, "m", a) == cache_key(Capability::nli, "m", b));
  CHECK(cache_key(Capability::nli, "m", a) != cache_key(Capability::nli, "m2", a));
  CHECK(cache_key(Capability::nli, "m", a) != cache_key(Capability::chat, "m", a));
  CHECK(cache_key(Capability::nli, "m", a) != cache_key(Capability::nli, "m", {{"premise", "a b!"}, {"hypothesis", "c"}}));
  CHECK(cache_key(Capability::nli, "m", a).size() == 64);
}

TEST_CASE("wire contracts") {
  CHECK_NOTHROW(validate_response(Capability::chat, {{"choices", {{{"message", {{"content", "hi"}}}}}}}));
  CHECK_THROWS_AS(validate_response(Capability::chat, {{"choices", json::array()}}), ProtocolError);
  CHECK_THROWS_AS(validate_response(Capability::classify, {{"label", "neutral"}, {"confidence", 0.5}}), ProtocolError);
  CHECK_THROWS_AS(validate_response(Capability::nli, {{"label", "maybe"}}), ProtocolError);
  CHECK_THROWS_AS(validate_response(Capability::nli, {{"label", "neutral"}, {"scores", {0.1, 0.2}}}), ProtocolError);
  CHECK_THROWS_AS(validate_response(Capability::logprob, {{"token_logprobs", {-1.0, 0.5}}}), ProtocolError);
  CHECK_THROWS_AS(validate_response(Capability::scorer, {{"score", 3}, {"scale", {5, 1}}}), ProtocolError);
  CHECK_NOTHROW(validate_response(Capability::scorer, {{"score", 3}, {"scale", {1, 5}}}));
}

TEST_CASE("spec validation") {
  BackendSpec s = spec(Capability::chat);
  s.timeout_s = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec(Capability::chat);
  s.max_retries = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(spec_from_json(to_json(spec(Capability::nli, "x"))).model_id == "x");
}

TEST_CASE("mock backends: scripts, generators and misses") {
  MockBackend mock(spec(Capability::nli));
  mock.script({{"premise", "A"}, {"hypothesis", "B"}}, {{"label", "contradiction"}});
  CHECK(nli(mock, "A", "B").label == NliLabel::contradiction);
  CHECK_THROWS_AS(nli(mock, "B", "A"), MockMissError);
  CHECK(mock.call_count() == 2);

  MockBackend lm(spec(Capability::logprob), [](const json&) { return json{{"token_logprobs", {-std::log(4.0)}}}; });
  CHECK(token_logprobs(lm, "", "x")[0] == doctest::Approx(-std::log(4.0)));
}

TEST_CASE("second identical request is served from the cache") {
  testing::TempDir dir("cache");
  auto cache = std::make_shared<ResponseCache>(dir.path());
  auto mock = std::make_shared<MockBackend>(spec(Capability::nli), [](const json&) { return json{{"label", "neutral"}}; });
  auto cached = std::make_shared<CachedBackend>(mock, cache);
  nli(*cached, "p", "h");
  nli(*cached, "p", "h");
  CHECK(mock->call_count() == 1);
  CHECK(cached->stats().cache_hits == 1);
  CHECK(cache->size() == 1);

  // A fresh cache over the same directory reads the stored file.
  auto reopened = std::make_shared<CachedBackend>(mock, std::make_shared<ResponseCache>(dir.path()));
  nli(*reopened, "p", "h");
  CHECK(mock->call_count() == 1);
}

TEST_CASE("cache transparency") {
  auto gen = [](const json& r) {
    const auto s = r.at("premise").get<std::string>();
    return json{{"label", s.size() % 3 == 0 ? "entailment" : s.size() % 3 == 1 ? "neutral" : "contradiction"}};
  };
  auto plain = std::make_shared<MockBackend>(spec(Capability::nli), gen);
  auto cached = assemble(std::make_shared<MockBackend>(spec(Capability::nli), gen), std::make_shared<ResponseCache>());
  for (int round = 0; round < 2; ++round) {
    for (int i = 0; i < 50; ++i) {
      const std::string p(static_cast<std::size_t>(i), 'x');
      CHECK(nli(*plain, p, "h").label == nli(*cached, p, "h").label);
    }
  }
}

TEST_CASE("a response failing its contract is not cached") {
  auto cache = std::make_shared<ResponseCache>();
  auto bad = std::make_shared<MockBackend>(spec(Capability::nli), [](const json&) { return json{{"label", "??"}}; });
  CachedBackend cached(bad, cache);
  CHECK_THROWS_AS(nli(cached, "a", "b"), ProtocolError);
  CHECK(cache->size() == 0);
}

TEST_CASE("in-flight requests never exceed the configured limit") {
  auto mock = std::make_shared<MockBackend>(spec(Capability::nli, "m", 3), [](const json&) {
    return json{{"label", "neutral"}};
  });
  mock->set_latency(std::chrono::milliseconds(5));
  auto limited = assemble(mock, nullptr);
  bounded_for(40, 12, [&](std::size_t i) { nli(*limited, "p" + std::to_string(i), "h"); });
  const auto log = mock->call_log();
  CHECK(log.size() == 40);
  CHECK(max_overlap(log) <= 3);
  CHECK(max_overlap(log) >= 1);
}

TEST_CASE("max_overlap counts intersecting intervals") {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto at = [&](int ms) { return t0 + std::chrono::milliseconds(ms); };
  std::vector<MockCall> log = {{{}, at(0), at(10)}, {{}, at(5), at(15)}, {{}, at(10), at(20)}, {{}, at(6), at(7)}};
  CHECK(max_overlap(log) == 3);
}

TEST_CASE("transient 503 then 200 succeeds after one retry") {
  auto transport = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{503, "busy", {}}, {200, kNliOk, {}}});
  std::vector<double> sleeps;
  HttpBackend http(http_spec(Capability::nli), transport,
                   [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
  CHECK(nli(http, "a", "b").label == NliLabel::entailment);
  CHECK(HttpBackend::last_retry_count() == 1);
  CHECK(http.stats().retries == 1);
  CHECK(http.stats().http_calls == 2);
  REQUIRE(sleeps.size() == 1);
  CHECK(sleeps[0] == doctest::Approx(0.5));
}

TEST_CASE("exhausted retries report the last status with exponential backoff") {
  auto transport = std::make_shared<FakeTransport>(
      std::deque<HttpResponse>{{500, "", {}}, {502, "", {}}, {429, "", {}}, {503, "down", {}}});
  std::vector<double> sleeps;
  HttpBackend http(http_spec(Capability::nli, 3), transport,
                   [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
  try {
    nli(http, "a", "b");
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.last_status() == 503);
  }
  CHECK(sleeps == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(transport->urls.size() == 4);
}

TEST_CASE("client errors are not retried; overflow and garbage are typed") {
  auto t1 = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{404, "no", {}}});
  HttpBackend h1(http_spec(Capability::nli), t1, [](auto) {});
  CHECK_THROWS_AS(nli(h1, "a", "b"), BackendError);
  CHECK(t1->urls.size() == 1);

  auto t2 = std::make_shared<FakeTransport>(
      std::deque<HttpResponse>{{400, "This model's maximum context length is 1024 tokens", {}}});
  HttpBackend h2(http_spec(Capability::logprob), t2, [](auto) {});
  CHECK_THROWS_AS(token_logprobs(h2, "a", "b"), ContextOverflowError);

  auto t3 = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{200, "<html>", {}}});
  HttpBackend h3(http_spec(Capability::nli), t3, [](auto) {});
  CHECK_THROWS_AS(nli(h3, "a", "b"), ProtocolError);
}

TEST_CASE("endpoints and keys from the environment") {
  ::setenv("POLARDIAL_TEST_URL", "http://example.invalid/nli", 1);
  ::setenv("POLARDIAL_TEST_KEY", "sekrit", 1);
  auto t = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{200, kNliOk, {}}});
  BackendSpec s = http_spec(Capability::nli);
  s.endpoint = "env:POLARDIAL_TEST_URL";
  s.api_key_env = "POLARDIAL_TEST_KEY";
  HttpBackend http(s, t, [](auto) {});
  nli(http, "a", "b");
  CHECK(t->urls.at(0) == "http://example.invalid/nli");
  CHECK(t->headers.find("Authorization")->second == "Bearer sekrit");
  s.endpoint = "env:POLARDIAL_TEST_UNSET_VAR";
  HttpBackend missing(s, t, [](auto) {});
  CHECK_THROWS_AS(nli(missing, "a", "b"), ConfigError);
}

TEST_CASE("HTTP round trip against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = json::parse(req.body);
    const double score = static_cast<double>(body.at("context").size());
    res.set_content(json{{"score", score}, {"scale", {0, 10}}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendSpec s = spec(Capability::scorer, "scorer");
  s.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/score";
  s.timeout_s = 5;
  auto backend = make_http_backend(s, std::make_shared<ResponseCache>());
  const auto r = score_response(*backend, {"a", "b"}, "c");
  CHECK(r.score == 2.0);
  CHECK(r.hi == 10.0);
  score_response(*backend, {"a", "b"}, "c");
  CHECK(hits == 1);

  server.stop();
  thread.join();
}
