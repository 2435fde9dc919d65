#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "polardial/backends.hpp"
#include "polardial/persona.hpp"

namespace testing {

using polardial::backends::BackendSpec;
using polardial::backends::Capability;
using polardial::backends::MockBackend;
using json = nlohmann::json;

inline BackendSpec spec(Capability c, std::string model = "mock", std::size_t max_in_flight = 8) {
  BackendSpec s;
  s.capability = c;
  s.endpoint = "mock:";
  s.model_id = std::move(model);
  s.max_in_flight = max_in_flight;
  return s;
}

// NLI mock answering contradiction for the listed (unordered) text pairs and
// neutral otherwise.
inline std::shared_ptr<MockBackend> contradiction_nli(std::set<std::pair<std::string, std::string>> pairs) {
  return std::make_shared<MockBackend>(spec(Capability::nli), [pairs = std::move(pairs)](const json& r) {
    const auto a = r.at("premise").get<std::string>();
    const auto b = r.at("hypothesis").get<std::string>();
    const bool hit = pairs.count({a, b}) != 0 || pairs.count({b, a}) != 0;
    return json{{"label", hit ? "contradiction" : "neutral"}};
  });
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("polardial-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline polardial::Persona scored(std::string id, std::string text, double s) {
  polardial::Persona p;
  p.persona_id = std::move(id);
  p.text = std::move(text);
  p.polarity = polardial::PolarityScore(s);
  return p;
}

}  // namespace testing
