#include "polardial/config.hpp"

#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "polardial/error.hpp"
#include "polardial/json_io.hpp"

namespace polardial::config {
namespace {

using backends::BackendSpec;
using backends::Capability;

json backend_doc(const char* env, const char* model, const char* key_env = "") {
  json j{{"endpoint", std::string("env:") + env}, {"model_id", model}};
  if (*key_env != '\0') j["api_key_env"] = key_env;
  return j;
}

json generator_doc(const char* model) { return backend_doc("POLARDIAL_CHAT_URL", model); }

json reference_backends(json generators) {
  return json{{"classifier", backend_doc("POLARDIAL_CLASSIFY_URL", "distilbert-base-uncased-finetuned-sst-2-english")},
              {"profile_nli", backend_doc("POLARDIAL_PROFILE_NLI_URL", "cross-encoder/nli-deberta-v3-large")},
              {"metric_nli", backend_doc("POLARDIAL_METRIC_NLI_URL", "bert-large-dialogue-nli")},
              {"logprob", backend_doc("POLARDIAL_LOGPROB_URL", "gpt2-large")},
              {"qdce", backend_doc("POLARDIAL_QDCE_URL", "q-dce")},
              {"paireval", backend_doc("POLARDIAL_PAIREVAL_URL", "paireval")},
              {"judge", backend_doc("POLARDIAL_JUDGE_URL", "gpt-4o", "OPENAI_API_KEY")},
              {"generators", std::move(generators)}};
}

json base_document() {
  return json{{"preset", ""},
              {"seed", nullptr},
              {"run_dir", "runs/experiment"},
              {"corpus", {{"path", "data/convai2/train_both_original.txt"}, {"format", "convai2_text"}}},
              {"threshold", 0.99},
              {"profiles",
               {{"k", 5},
                {"n_per_type", 10000},
                {"types", json::array()},
                {"mix_ratio", nullptr},
                {"max_attempts", 200},
                {"levels", json::array()}}},
              {"pairing", json::array()},
              {"generation",
               {{"strategies", {"joint"}},
                {"orderings", {"none"}},
                {"bias_a", 0.05},
                {"turn_source", "default"},
                {"turn_distribution", json::object()},
                {"filter",
                 {{"refusal_patterns", {"I can't", "I cannot", "as an AI", "I'm sorry, but"}},
                  {"similarity_threshold", 0.95},
                  {"ngram_n", 4},
                  {"max_ngram_repeats", 3}}}}},
              {"metrics",
               {"c_score", "contd", "p_gap", "geval_consistency", "perplexity", "qdce", "paireval", "geval_coherence"}},
              {"geval_retries", 2},
              {"backends", reference_backends(json::array({generator_doc("meta-llama/Llama-3.1-8B-Instruct")}))},
              {"concurrency", {{"score", 8}, {"synthesize", 8}, {"generate", 16}, {"evaluate", 16}}},
              {"cache_dir", ""},
              {"templates_dir", ""},
              {"mock", false},
              {"sweep", nullptr}};
}

json pairs(std::initializer_list<std::pair<const char*, int>> plan) {
  json out = json::array();
  for (const auto& [type, n] : plan) out.push_back({{"type", type}, {"n", n}});
  return out;
}

const json kFourModels = json::array({generator_doc("meta-llama/Llama-3.1-8B-Instruct"),
                                      generator_doc("Qwen/Qwen2.5-7B-Instruct"),
                                      generator_doc("mistralai/Ministral-8B-Instruct-2410"),
                                      generator_doc("google/gemma-2-9b-it")});

json preset_patch(const std::string& name) {
  if (name == "rq1_pairing") {
    return json{{"run_dir", "runs/rq1_pairing"},
                {"profiles", {{"k", 5}, {"n_per_type", 10000}, {"types", {"negative", "positive", "mixed"}}}},
                {"pairing", pairs({{"original", 3000}, {"negative", 3000}, {"positive", 3000}, {"mixed", 3000},
                                   {"opposite", 3000}})},
                {"backends", {{"generators", kFourModels}}}};
  }
  if (name == "rq1_levels") {
    return json{{"run_dir", "runs/rq1_levels"},
                {"profiles", {{"k", 1}, {"types", json::array()}, {"levels", {1, 2, 3, 4, 5, 6, 7, 8, 9}}}},
                {"pairing", pairs({{"level_k", 500}})},
                {"backends",
                 {{"generators", json::array({generator_doc("meta-llama/Llama-3.1-8B-Instruct"),
                                              generator_doc("Qwen/Qwen2.5-7B-Instruct")})}}}};
  }
  if (name == "rq2_ordering") {
    return json{{"run_dir", "runs/rq2_ordering"},
                {"pairing", pairs({{"original", 3000}})},
                {"generation",
                 {{"strategies", {"joint", "turn_based"}},
                  {"orderings", {"none", "asc", "dsc", "c_asc"}},
                  {"turn_source", "joint"}}},
                {"backends",
                 {{"generators", json::array({generator_doc("meta-llama/Llama-3.2-3B-Instruct"),
                                              generator_doc("Qwen/Qwen2.5-3B-Instruct")})}}}};
  }
  if (name == "appendix_k_sweep") {
    return json{{"run_dir", "runs/appendix_k_sweep"},
                {"profiles", {{"n_per_type", 1000}, {"types", {"negative", "positive", "mixed"}}}},
                {"pairing", pairs({{"negative", 1000}, {"positive", 1000}, {"mixed", 1000}})},
                {"sweep", {{"parameter", "profiles.k"}, {"values", {1, 2, 5, 10}}}}};
  }
  if (name == "appendix_ratio_sweep") {
    return json{{"run_dir", "runs/appendix_ratio_sweep"},
                {"profiles", {{"k", 5}, {"n_per_type", 1000}, {"types", {"mixed"}}}},
                {"pairing", pairs({{"mixed", 1000}})},
                {"backends",
                 {{"generators", json::array({generator_doc("meta-llama/Llama-3.1-8B-Instruct"),
                                              generator_doc("mistralai/Ministral-8B-Instruct-2410")})}}},
                {"sweep", {{"parameter", "profiles.mix_ratio"}, {"values", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}}}}};
  }
  if (name == "appendix_size_sweep") {
    json models = json::array();
    for (const char* m : {"Qwen/Qwen2.5-0.5B-Instruct", "Qwen/Qwen2.5-3B-Instruct", "Qwen/Qwen2.5-7B-Instruct",
                          "Qwen/Qwen2.5-14B-Instruct", "Qwen/Qwen2.5-32B-Instruct"}) {
      models.push_back(generator_doc(m));
    }
    return json{{"run_dir", "runs/appendix_size_sweep"},
                {"profiles", {{"k", 5}, {"n_per_type", 10000}, {"types", {"negative", "positive", "mixed"}}}},
                {"pairing", pairs({{"negative", 1000}, {"positive", 1000}, {"mixed", 1000}})},
                {"backends", {{"generators", std::move(models)}}}};
  }
  if (name == "smoke") {
    json mock_backends = reference_backends(json::array({generator_doc("mock-chat")}));
    for (auto& [role, spec] : mock_backends.items()) {
      if (spec.is_object()) spec["endpoint"] = "mock:";
    }
    for (auto& g : mock_backends["generators"]) g["endpoint"] = "mock:";
    mock_backends["judge"].erase("api_key_env");
    return json{{"seed", 7},
                {"run_dir", "runs/smoke"},
                {"mock", true},
                {"corpus", {{"path", "data/smoke/convai2_smoke.txt"}, {"format", "convai2_text"}}},
                {"profiles", {{"k", 3}, {"n_per_type", 12}, {"types", {"negative", "positive"}}}},
                {"pairing", pairs({{"negative", 20}, {"opposite", 20}})},
                {"generation", {{"strategies", {"joint", "turn_based"}}, {"orderings", {"c_asc"}}}},
                {"backends", std::move(mock_backends)},
                {"concurrency", {{"score", 4}, {"synthesize", 4}, {"generate", 4}, {"evaluate", 4}}}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<T>();
}

BackendSpec backend_from(const json& j, Capability capability, const std::string& role) {
  if (!j.is_object()) throw ConfigError("backends." + role + " must be a mapping");
  json doc = j;
  doc["capability"] = std::string(backends::to_string(capability));
  try {
    return backends::spec_from_json(doc);
  } catch (const json::exception& e) {
    throw ConfigError("backends." + role + ": " + e.what());
  }
}

json backend_to(const BackendSpec& spec) {
  json j = backends::to_json(spec);
  j.erase("capability");
  return j;
}

json yaml_node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& child : node) out.push_back(yaml_node_to_json(child));
      return out;
    }
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
      return out;
    }
    case YAML::NodeType::Scalar: break;
  }
  const std::string s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  static const std::regex int_re(R"(^[-+]?[0-9]+$)");
  static const std::regex float_re(R"(^[-+]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?$)");
  if (s == "true" || s == "True" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "no") return false;
  if (s == "~" || s == "null" || s == "Null") return nullptr;
  if (std::regex_match(s, int_re)) {
    if (s[0] == '-') return std::stoll(s);
    return std::stoull(s[0] == '+' ? s.substr(1) : s);
  }
  if (std::regex_match(s, float_re)) return std::stod(s);
  return s;
}

void resolve_relative(std::filesystem::path& p, const std::filesystem::path& base) {
  if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
}

void apply(ExperimentConfig& cfg, const LoadOptions& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.mock) cfg.mock = *o.mock;
  if (o.run_dir) cfg.run_dir = *o.run_dir;
}

ExperimentConfig finish(json doc, const std::filesystem::path& base, const LoadOptions& overrides) {
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (doc["seed"].is_null()) throw ConfigError("config must set a seed (or pass --seed)");
  ExperimentConfig cfg = from_json(doc);
  resolve_relative(cfg.run_dir, base);
  resolve_relative(cfg.corpus_path, base);
  resolve_relative(cfg.cache_dir, base);
  resolve_relative(cfg.templates_dir, base);
  apply(cfg, overrides);
  cfg.validate();
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"rq1_pairing", "rq1_levels", "rq2_ordering", "appendix_k_sweep", "appendix_ratio_sweep",
          "appendix_size_sweep", "smoke"};
}

json preset_document(const std::string& name) {
  json doc = base_document();
  doc.merge_patch(preset_patch(name));
  doc["preset"] = name;
  return doc;
}

void ExperimentConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus.path is required");
  if (run_dir.empty()) throw ConfigError("run_dir is required");
  if (!(threshold > 0.5 && threshold < 1.0)) throw ConfigError("threshold must lie in (0.5, 1)");
  if (profiles.k < 1) throw ConfigError("profiles.k must be >= 1");
  if (profiles.mix_ratio && !(*profiles.mix_ratio >= 0.0 && *profiles.mix_ratio <= 1.0)) {
    throw ConfigError("profiles.mix_ratio must lie in [0, 1]");
  }
  for (auto t : profiles.types) {
    if (t != ProfileType::negative && t != ProfileType::positive && t != ProfileType::mixed) {
      throw ConfigError("profiles.types may only list negative, positive and mixed");
    }
  }
  for (int l : profiles.levels) {
    if (l < 1 || l > 9) throw ConfigError("profiles.levels entries must lie in 1..9");
  }
  auto has_type = [&](ProfileType t) {
    return std::find(profiles.types.begin(), profiles.types.end(), t) != profiles.types.end();
  };
  for (const auto& p : pairing) {
    using pairing::PairingType;
    if (p.n == 0) throw ConfigError("pairing entries need n >= 1");
    switch (p.type) {
      case PairingType::negative:
        if (!has_type(ProfileType::negative)) throw ConfigError("negative pairing needs negative profiles");
        break;
      case PairingType::positive:
        if (!has_type(ProfileType::positive)) throw ConfigError("positive pairing needs positive profiles");
        break;
      case PairingType::mixed:
        if (!has_type(ProfileType::mixed)) throw ConfigError("mixed pairing needs mixed profiles");
        break;
      case PairingType::opposite:
        if (!has_type(ProfileType::negative) || !has_type(ProfileType::positive)) {
          throw ConfigError("opposite pairing needs negative and positive profiles");
        }
        break;
      case PairingType::level_k:
        if (profiles.levels.empty()) throw ConfigError("level pairing needs profiles.levels");
        break;
      case PairingType::original: break;
    }
  }
  if (generation.strategies.empty()) throw ConfigError("generation.strategies is empty");
  if (generation.bias_a < 0.0) throw ConfigError("generation.bias_a must be >= 0");
  if (generation.turn_source == "fixed") dialogue::TurnDistribution check(generation.turn_distribution);
  if (backends.generators.empty()) throw ConfigError("backends.generators is empty");
  std::set<std::string> models;
  for (const auto& g : backends.generators) {
    if (!models.insert(g.model_id).second) throw ConfigError("duplicate generator model " + g.model_id);
  }
  if (geval_retries < 0) throw ConfigError("geval_retries must be >= 0");
  if (sweep && sweep->parameter != "profiles.k" && sweep->parameter != "profiles.mix_ratio") {
    throw ConfigError("sweep.parameter must be profiles.k or profiles.mix_ratio");
  }
}

std::filesystem::path ExperimentConfig::effective_cache_dir() const {
  return cache_dir.empty() ? run_dir / "cache" : cache_dir;
}

json to_json(const ExperimentConfig& cfg) {
  json types = json::array();
  for (auto t : cfg.profiles.types) types.push_back(std::string(to_string(t)));
  json pairs_doc = json::array();
  for (const auto& p : cfg.pairing) pairs_doc.push_back({{"type", pairing::to_string(p.type)}, {"n", p.n}});
  json strategies = json::array();
  for (auto s : cfg.generation.strategies) strategies.push_back(std::string(dialogue::to_string(s)));
  json orderings = json::array();
  for (auto o : cfg.generation.orderings) orderings.push_back(std::string(dialogue::to_string(o)));
  json turn_dist = json::object();
  for (const auto& [n, p] : cfg.generation.turn_distribution) turn_dist[std::to_string(n)] = p;
  json metric_names = json::array();
  for (auto m : cfg.metrics) metric_names.push_back(std::string(metrics::metric_key(m)));
  json generators = json::array();
  for (const auto& g : cfg.backends.generators) generators.push_back(backend_to(g));

  return json{
      {"preset", cfg.preset},
      {"seed", cfg.seed},
      {"run_dir", cfg.run_dir.string()},
      {"corpus", {{"path", cfg.corpus_path.string()}, {"format", cfg.corpus_format == corpus::Format::jsonl ? "jsonl" : "convai2_text"}}},
      {"threshold", cfg.threshold},
      {"profiles",
       {{"k", cfg.profiles.k},
        {"n_per_type", cfg.profiles.n_per_type},
        {"types", types},
        {"mix_ratio", cfg.profiles.mix_ratio ? json(*cfg.profiles.mix_ratio) : json(nullptr)},
        {"max_attempts", cfg.profiles.max_attempts},
        {"levels", cfg.profiles.levels}}},
      {"pairing", pairs_doc},
      {"generation",
       {{"strategies", strategies},
        {"orderings", orderings},
        {"bias_a", cfg.generation.bias_a},
        {"turn_source", cfg.generation.turn_source},
        {"turn_distribution", turn_dist},
        {"filter",
         {{"refusal_patterns", cfg.generation.filter.refusal_patterns},
          {"similarity_threshold", cfg.generation.filter.similarity_threshold},
          {"ngram_n", cfg.generation.filter.ngram_n},
          {"max_ngram_repeats", cfg.generation.filter.max_ngram_repeats}}}}},
      {"metrics", metric_names},
      {"geval_retries", cfg.geval_retries},
      {"backends",
       {{"classifier", backend_to(cfg.backends.classifier)},
        {"profile_nli", backend_to(cfg.backends.profile_nli)},
        {"metric_nli", backend_to(cfg.backends.metric_nli)},
        {"logprob", backend_to(cfg.backends.logprob)},
        {"qdce", backend_to(cfg.backends.qdce)},
        {"paireval", backend_to(cfg.backends.paireval)},
        {"judge", backend_to(cfg.backends.judge)},
        {"generators", generators}}},
      {"concurrency",
       {{"score", cfg.concurrency.score},
        {"synthesize", cfg.concurrency.synthesize},
        {"generate", cfg.concurrency.generate},
        {"evaluate", cfg.concurrency.evaluate}}},
      {"cache_dir", cfg.cache_dir.string()},
      {"templates_dir", cfg.templates_dir.string()},
      {"mock", cfg.mock},
      {"sweep", cfg.sweep ? json{{"parameter", cfg.sweep->parameter}, {"values", cfg.sweep->values}} : json(nullptr)}};
}

ExperimentConfig from_json(const json& doc_in) {
  json doc = base_document();
  doc.merge_patch(doc_in);
  ExperimentConfig cfg;
  try {
    cfg.preset = get_or<std::string>(doc, "preset", "");
    if (doc["seed"].is_null()) throw ConfigError("config must set a seed");
    cfg.seed = doc["seed"].get<std::uint64_t>();
    cfg.run_dir = get_or<std::string>(doc, "run_dir", "");
    cfg.corpus_path = doc["corpus"].value("path", "");
    cfg.corpus_format = corpus::format_from_string(doc["corpus"].value("format", "convai2_text"));
    cfg.threshold = doc["threshold"].get<double>();

    json& pr = doc["profiles"];
    cfg.profiles.k = pr["k"].get<std::size_t>();
    cfg.profiles.n_per_type = pr["n_per_type"].get<std::size_t>();
    for (const auto& t : pr["types"]) cfg.profiles.types.push_back(profile_type_from_string(t.get<std::string>()));
    if (!pr["mix_ratio"].is_null()) cfg.profiles.mix_ratio = pr["mix_ratio"].get<double>();
    cfg.profiles.max_attempts = pr["max_attempts"].get<std::size_t>();
    cfg.profiles.levels = pr["levels"].get<std::vector<int>>();

    for (const auto& p : doc["pairing"]) {
      cfg.pairing.push_back(PairPlan{pairing::pairing_type_from_string(p.at("type").get<std::string>()),
                                     p.at("n").get<std::size_t>()});
    }

    json& g = doc["generation"];
    cfg.generation.strategies.clear();
    for (const auto& s : g["strategies"]) cfg.generation.strategies.push_back(dialogue::strategy_from_string(s.get<std::string>()));
    cfg.generation.orderings.clear();
    for (const auto& o : g["orderings"]) cfg.generation.orderings.push_back(dialogue::ordering_from_string(o.get<std::string>()));
    if (cfg.generation.orderings.empty()) cfg.generation.orderings.push_back(dialogue::OrderingKind::none);
    cfg.generation.bias_a = g["bias_a"].get<double>();
    cfg.generation.turn_source = g["turn_source"].get<std::string>();
    for (const auto& [k, v] : g["turn_distribution"].items()) cfg.generation.turn_distribution[std::stoi(k)] = v.get<double>();
    json& f = g["filter"];
    cfg.generation.filter.refusal_patterns = f["refusal_patterns"].get<std::vector<std::string>>();
    cfg.generation.filter.similarity_threshold = f["similarity_threshold"].get<double>();
    cfg.generation.filter.ngram_n = f["ngram_n"].get<int>();
    cfg.generation.filter.max_ngram_repeats = f["max_ngram_repeats"].get<int>();

    cfg.metrics.clear();
    for (const auto& m : doc["metrics"]) cfg.metrics.push_back(metrics::metric_from_key(m.get<std::string>()));
    cfg.geval_retries = doc["geval_retries"].get<int>();

    json& b = doc["backends"];
    cfg.backends.classifier = backend_from(b["classifier"], Capability::classify, "classifier");
    cfg.backends.profile_nli = backend_from(b["profile_nli"], Capability::nli, "profile_nli");
    cfg.backends.metric_nli = backend_from(b["metric_nli"], Capability::nli, "metric_nli");
    cfg.backends.logprob = backend_from(b["logprob"], Capability::logprob, "logprob");
    cfg.backends.qdce = backend_from(b["qdce"], Capability::scorer, "qdce");
    cfg.backends.paireval = backend_from(b["paireval"], Capability::scorer, "paireval");
    cfg.backends.judge = backend_from(b["judge"], Capability::chat, "judge");
    for (const auto& gen : b["generators"]) cfg.backends.generators.push_back(backend_from(gen, Capability::chat, "generators"));

    json& c = doc["concurrency"];
    cfg.concurrency.score = c["score"].get<std::size_t>();
    cfg.concurrency.synthesize = c["synthesize"].get<std::size_t>();
    cfg.concurrency.generate = c["generate"].get<std::size_t>();
    cfg.concurrency.evaluate = c["evaluate"].get<std::size_t>();
    cfg.cache_dir = get_or<std::string>(doc, "cache_dir", "");
    cfg.templates_dir = get_or<std::string>(doc, "templates_dir", "");
    cfg.mock = get_or<bool>(doc, "mock", false);
    if (!doc["sweep"].is_null()) {
      cfg.sweep = Sweep{doc["sweep"].at("parameter").get<std::string>(), doc["sweep"].at("values").get<std::vector<double>>()};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

json yaml_to_json(const std::string& text) {
  try {
    return yaml_node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, const LoadOptions& overrides) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  json file_doc = yaml_to_json(text);
  if (!file_doc.is_object()) throw ConfigError(path.string() + ": config must be a mapping");
  json doc = base_document();
  if (file_doc.contains("preset") && file_doc["preset"].is_string() && !file_doc["preset"].get<std::string>().empty()) {
    doc = preset_document(file_doc["preset"].get<std::string>());
  }
  doc.merge_patch(file_doc);
  return finish(std::move(doc), std::filesystem::absolute(path).parent_path(), overrides);
}

ExperimentConfig load_preset(const std::string& name, const LoadOptions& overrides) {
  return finish(preset_document(name), std::filesystem::current_path(), overrides);
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg) {
  if (!cfg.sweep) return {cfg};
  std::vector<ExperimentConfig> out;
  for (double v : cfg.sweep->values) {
    ExperimentConfig sub = cfg;
    sub.sweep.reset();
    std::ostringstream label;
    if (cfg.sweep->parameter == "profiles.k") {
      if (v < 1 || std::floor(v) != v) throw ConfigError("profiles.k sweep values must be positive integers");
      sub.profiles.k = static_cast<std::size_t>(v);
      label << "k=" << sub.profiles.k;
    } else {
      sub.profiles.mix_ratio = v;
      label << "mix_ratio=" << v;
    }
    sub.run_dir = cfg.run_dir / label.str();
    // Sub-runs share one response cache.
    sub.cache_dir = cfg.effective_cache_dir();
    sub.validate();
    out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace polardial::config
