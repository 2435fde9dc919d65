#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/backends.hpp"
#include "polardial/config.hpp"

namespace polardial::runner {

using json = nlohmann::json;

inline constexpr std::string_view kVersion = "polardial 0.1.0";

enum class Stage { ingest, score, synthesize, pair, generate, evaluate, report };
inline constexpr std::array<Stage, 7> kStages = {Stage::ingest,   Stage::score,    Stage::synthesize, Stage::pair,
                                                 Stage::generate, Stage::evaluate, Stage::report};
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view name);

// Backends of one run. Every role is Cache(Limited(Counting(inner))), so the
// counters see only calls that reached a model service.
class BackendSet {
 public:
  explicit BackendSet(std::shared_ptr<backends::ResponseCache> cache = nullptr);

  // Wraps inner for a role ("classifier", "generator:<model>", ...).
  std::shared_ptr<backends::Backend> attach(const std::string& role, std::shared_ptr<backends::Backend> inner);

  std::shared_ptr<backends::Backend> classifier;
  std::shared_ptr<backends::Backend> profile_nli;
  std::shared_ptr<backends::Backend> metric_nli;
  std::shared_ptr<backends::Backend> logprob;
  std::shared_ptr<backends::Backend> qdce;
  std::shared_ptr<backends::Backend> paireval;
  std::shared_ptr<backends::Backend> judge;
  std::vector<std::shared_ptr<backends::Backend>> generators;

  // Calls that missed the cache, by role.
  json call_counts() const;
  std::uint64_t total_calls() const;

 private:
  std::shared_ptr<backends::ResponseCache> cache_;
  std::map<std::string, std::shared_ptr<std::atomic<std::uint64_t>>> counters_;
};

// Mock or HTTP backends for a config, sharing the response cache under
// cfg.effective_cache_dir().
std::unique_ptr<BackendSet> make_backends(const config::ExperimentConfig& cfg);

struct StageRecord {
  Stage stage = Stage::ingest;
  std::string status = "not_run";  // done | resumed | failed | not_run
  double seconds = 0.0;
  json counts = json::object();
  std::vector<std::string> outputs;  // relative to the run directory
  std::string fingerprint;
};

struct RunManifest {
  json config;
  std::string version{kVersion};
  std::string status = "pending";  // complete | partial | failed
  std::optional<std::string> failing_stage;
  std::string error;
  std::vector<StageRecord> stages;
  json backend_calls = json::object();
  // Digest of the ordered pair manifest each generator consumed.
  std::map<std::string, std::string> pair_manifest_digests;
  // Digest over every file under corpus/, profiles/, pairs/, dialogues/,
  // metrics/ and report/.
  std::string digest;

  const StageRecord* find(Stage s) const;
};

json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

// SHA-256 over (relative path, file digest) of all run outputs, sorted by path.
std::string output_digest(const std::filesystem::path& run_dir);

struct RunOptions {
  // Skip stages whose marker matches their inputs and whose outputs are intact.
  bool resume = false;
};

// Runs the given stages in pipeline order and writes <run_dir>/manifest.json
// last. A failing stage stops the run; the manifest then records the
// failing stage and the error, and status "failed". Stages not listed keep
// their record from an earlier manifest in the same run directory.
RunManifest run_stages(const config::ExperimentConfig& cfg, const std::vector<Stage>& stages,
                       const RunOptions& options = {}, BackendSet* backends = nullptr);

// All stages. A config with a sweep must go through run_sweep.
RunManifest run_experiment(const config::ExperimentConfig& cfg, const RunOptions& options = {},
                           BackendSet* backends = nullptr);

// One full run per sweep value.
std::vector<RunManifest> run_sweep(const config::ExperimentConfig& cfg, const RunOptions& options = {});

// Deterministic stream seed for a named use of the run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view label);

// File-system safe form of a model id.
std::string model_slug(std::string_view model_id);

}  // namespace polardial::runner
