#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/backends.hpp"
#include "polardial/corpus.hpp"
#include "polardial/dialogue_gen.hpp"
#include "polardial/metrics.hpp"
#include "polardial/pairing.hpp"
#include "polardial/persona.hpp"

namespace polardial::config {

using json = nlohmann::json;

struct ProfilePlan {
  std::size_t k = 5;
  std::size_t n_per_type = 10000;
  std::vector<ProfileType> types;  // synthesized pools: negative, positive, mixed
  std::optional<double> mix_ratio;
  std::size_t max_attempts = 200;
  std::vector<int> levels;  // singleton level pools to build
};

struct PairPlan {
  pairing::PairingType type = pairing::PairingType::original;
  std::size_t n = 0;  // per level for level_k
};

struct GenerationPlan {
  std::vector<dialogue::Strategy> strategies{dialogue::Strategy::joint};
  // Turn-based runs only; joint runs always use "none".
  std::vector<dialogue::OrderingKind> orderings{dialogue::OrderingKind::none};
  double bias_a = 0.05;
  // "default" ({8: 0.6, 10: 0.4}), "joint" (kept joint dialogues of the same
  // run and model), "fixed" (turn_distribution below) or a path to a
  // dialogue JSONL file.
  std::string turn_source = "default";
  std::map<int, double> turn_distribution;
  dialogue::FilterConfig filter;
};

struct BackendsConfig {
  backends::BackendSpec classifier;
  backends::BackendSpec profile_nli;
  backends::BackendSpec metric_nli;
  backends::BackendSpec logprob;
  backends::BackendSpec qdce;
  backends::BackendSpec paireval;
  backends::BackendSpec judge;
  std::vector<backends::BackendSpec> generators;
};

struct Concurrency {
  std::size_t score = 8;
  std::size_t synthesize = 8;
  std::size_t generate = 16;
  std::size_t evaluate = 16;
};

// One sweep axis; each value produces a sub-run under run_dir/<label>.
struct Sweep {
  std::string parameter;  // "profiles.k" | "profiles.mix_ratio"
  std::vector<double> values;
};

struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 0;
  std::filesystem::path run_dir;
  std::filesystem::path corpus_path;
  corpus::Format corpus_format = corpus::Format::convai2_text;
  double threshold = 0.99;
  ProfilePlan profiles;
  std::vector<PairPlan> pairing;
  GenerationPlan generation;
  std::vector<metrics::Metric> metrics{metrics::kMetrics.begin(), metrics::kMetrics.end()};
  int geval_retries = 2;
  BackendsConfig backends;
  Concurrency concurrency;
  std::filesystem::path cache_dir;      // empty: <run_dir>/cache
  std::filesystem::path templates_dir;  // empty: built-in templates
  bool mock = false;
  std::optional<Sweep> sweep;

  // Throws ConfigError on an inconsistent config.
  void validate() const;
  std::filesystem::path effective_cache_dir() const;
};

std::vector<std::string> preset_names();
// Full config document of a preset. Throws ConfigError for an unknown name.
json preset_document(const std::string& name);

json to_json(const ExperimentConfig& cfg);
ExperimentConfig from_json(const json& doc);

// YAML (or JSON, a YAML subset) document to JSON; quoted scalars stay strings.
json yaml_to_json(const std::string& text);

struct LoadOptions {
  std::optional<std::uint64_t> seed;
  std::optional<bool> mock;
  std::optional<std::filesystem::path> run_dir;
};

// Reads a config file: the document's "preset" (if any) supplies defaults,
// the file's keys are merge-patched over it, relative paths resolve against
// the file's directory, then the command-line overrides apply. A config
// without a seed is rejected.
ExperimentConfig load_config(const std::filesystem::path& path, const LoadOptions& overrides = {});
ExperimentConfig load_preset(const std::string& name, const LoadOptions& overrides = {});

// Concrete sub-configs; a config without a sweep expands to itself.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg);

}  // namespace polardial::config
