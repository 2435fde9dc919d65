#include "polardial/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <set>

#include <spdlog/spdlog.h>

#include "polardial/corpus.hpp"
#include "polardial/dialogue_gen.hpp"
#include "polardial/digest.hpp"
#include "polardial/error.hpp"
#include "polardial/json_io.hpp"
#include "polardial/metrics.hpp"
#include "polardial/mock_models.hpp"
#include "polardial/pairing.hpp"
#include "polardial/parallel.hpp"
#include "polardial/polarity.hpp"
#include "polardial/profile_builder.hpp"
#include "polardial/report.hpp"

namespace polardial::runner {
namespace fs = std::filesystem;

using config::ExperimentConfig;
using dialogue::Dialogue;
using dialogue::FilterStatus;
using dialogue::OrderingKind;
using dialogue::Strategy;
using metrics::Metric;

namespace {

constexpr std::array<const char*, 6> kOutputDirs = {"corpus", "profiles", "pairs", "dialogues", "metrics", "report"};

class CountingBackend : public backends::Backend {
 public:
  CountingBackend(std::shared_ptr<backends::Backend> inner, std::shared_ptr<std::atomic<std::uint64_t>> counter)
      : inner_(std::move(inner)), counter_(std::move(counter)) {}

  json call(const json& request) override {
    counter_->fetch_add(1);
    return inner_->call(request);
  }
  const backends::BackendSpec& spec() const override { return inner_->spec(); }

 private:
  std::shared_ptr<backends::Backend> inner_;
  std::shared_ptr<std::atomic<std::uint64_t>> counter_;
};

// ---- run-directory helpers ---------------------------------------------------

std::string rel(const fs::path& run_dir, const fs::path& p) { return p.lexically_relative(run_dir).generic_string(); }

std::vector<json> rows_of(const std::vector<Persona>& personas) {
  std::vector<json> rows;
  rows.reserve(personas.size());
  for (const auto& p : personas) rows.push_back(to_json(p));
  return rows;
}

std::vector<json> rows_of(const std::vector<UserProfile>& profiles) {
  std::vector<json> rows;
  rows.reserve(profiles.size());
  for (const auto& p : profiles) rows.push_back(to_json(p));
  return rows;
}

std::vector<Persona> read_personas(const fs::path& path) {
  std::vector<Persona> out;
  for (const auto& row : read_jsonl(path)) out.push_back(persona_from_json(row));
  return out;
}

std::vector<UserProfile> read_profiles(const fs::path& path) {
  std::vector<UserProfile> out;
  for (const auto& row : read_jsonl(path)) out.push_back(profile_from_json(row));
  return out;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

void require(const fs::path& path, Stage producer) {
  if (!fs::exists(path)) {
    throw Error("missing " + path.string() + "; run the " + std::string(to_string(producer)) + " stage first");
  }
}

// ---- stage context -------------------------------------------------------------

struct Ctx {
  const ExperimentConfig& cfg;
  fs::path dir;
  BackendSet& backends;
  prompts::TemplateSet templates;
  std::map<std::string, std::string> pair_digests;

  fs::path path(const std::string& relative) const { return dir / relative; }
};

struct StageResult {
  json counts = json::object();
  std::vector<fs::path> outputs;
};

// Every profile of the run (corpus and synthesized pools), by id.
std::map<std::string, UserProfile> load_profile_map(const Ctx& ctx) {
  std::map<std::string, UserProfile> out;
  require(ctx.path("corpus/profiles.jsonl"), Stage::ingest);
  for (auto& p : read_profiles(ctx.path("corpus/profiles.jsonl"))) out.emplace(p.profile_id, std::move(p));
  const fs::path pdir = ctx.path("profiles");
  require(pdir / "summary.json", Stage::synthesize);
  const json summary = json::parse(read_text(pdir / "summary.json"));
  for (const auto& entry : summary.at("pools")) {
    for (auto& p : read_profiles(pdir / entry.at("file").get<std::string>())) out.emplace(p.profile_id, std::move(p));
  }
  return out;
}

PersonaIndex load_scored_index(const Ctx& ctx) {
  require(ctx.path("corpus/scored_personas.jsonl"), Stage::score);
  return PersonaIndex(read_personas(ctx.path("corpus/scored_personas.jsonl")));
}

std::vector<pairing::ProfilePair> load_pairs(const Ctx& ctx, const std::map<std::string, UserProfile>& profiles) {
  require(ctx.path("pairs/pairs.jsonl"), Stage::pair);
  std::vector<pairing::ProfilePair> out;
  for (const auto& row : read_jsonl(ctx.path("pairs/pairs.jsonl"))) {
    pairing::ProfilePair pair;
    pair.pair_id = row.at("pair_id").get<std::string>();
    pair.pairing_type = pairing::pairing_type_from_string(row.at("pairing_type").get<std::string>());
    auto a = profiles.find(row.at("first_profile_id").get<std::string>());
    auto b = profiles.find(row.at("second_profile_id").get<std::string>());
    if (a == profiles.end() || b == profiles.end()) throw Error("pair " + pair.pair_id + " references an unknown profile");
    pair.first = a->second;
    pair.second = b->second;
    if (row.contains("level") && !row["level"].is_null()) pair.level = row["level"].get<int>();
    out.push_back(std::move(pair));
  }
  return out;
}

// ---- stages ---------------------------------------------------------------------

StageResult stage_ingest(Ctx& ctx) {
  const auto corpus = corpus::ingest_corpus(ctx.cfg.corpus_path, ctx.cfg.corpus_format);
  corpus::write_corpus(ctx.path("corpus"), corpus);
  StageResult r;
  r.counts = {{"profiles", corpus.profiles.size()}, {"personas", corpus.personas.size()}};
  r.outputs = {ctx.path("corpus/personas.jsonl"), ctx.path("corpus/profiles.jsonl")};
  return r;
}

StageResult stage_score(Ctx& ctx) {
  require(ctx.path("corpus/personas.jsonl"), Stage::ingest);
  auto personas = read_personas(ctx.path("corpus/personas.jsonl"));
  std::size_t already = 0;
  for (const auto& p : personas) already += p.polarity ? 1 : 0;
  const auto counts = polarity::partition_corpus(personas, *ctx.backends.classifier, ctx.cfg.threshold,
                                                 ctx.cfg.concurrency.score);
  write_jsonl(ctx.path("corpus/scored_personas.jsonl"), rows_of(personas));
  json partition{{"threshold", ctx.cfg.threshold},
                 {"positive", counts.positive},
                 {"negative", counts.negative},
                 {"neutral", counts.neutral},
                 {"per_level", counts.per_level}};
  write_text_atomic(ctx.path("corpus/partition.json"), pretty(partition));
  StageResult r;
  r.counts = partition;
  r.counts["scored"] = personas.size() - already;
  r.outputs = {ctx.path("corpus/scored_personas.jsonl"), ctx.path("corpus/partition.json")};
  return r;
}

StageResult stage_synthesize(Ctx& ctx) {
  const auto index = load_scored_index(ctx);
  const auto& personas = index.all();
  const profiles::LabeledPool pool(personas, ctx.cfg.threshold);
  const fs::path pdir = ctx.path("profiles");
  fs::create_directories(pdir);

  StageResult r;
  json pools = json::array();
  auto record = [&](const std::string& name, const std::vector<UserProfile>& profiles, std::optional<int> level) {
    const std::string file = name + ".jsonl";
    write_jsonl(pdir / file, rows_of(profiles));
    double words = 0.0;
    for (const auto& p : profiles) {
      for (const auto& t : index.texts(p)) words += static_cast<double>(word_count(t));
    }
    json entry{{"name", name},
               {"file", file},
               {"n_profiles", profiles.size()},
               {"mean_profile_words", profiles.empty() ? 0.0 : words / static_cast<double>(profiles.size())}};
    if (level) entry["level"] = *level;
    pools.push_back(entry);
    r.counts[name] = profiles.size();
    r.outputs.push_back(pdir / file);
  };

  for (ProfileType type : ctx.cfg.profiles.types) {
    profiles::SynthesisConfig sc;
    sc.k = ctx.cfg.profiles.k;
    sc.profile_type = type;
    sc.n_profiles = ctx.cfg.profiles.n_per_type;
    sc.mix_ratio = ctx.cfg.profiles.mix_ratio;
    sc.seed = stream_seed(ctx.cfg.seed, "synthesize:" + std::string(to_string(type)));
    sc.max_attempts = ctx.cfg.profiles.max_attempts;
    sc.threshold = ctx.cfg.threshold;
    sc.max_in_flight = ctx.cfg.concurrency.synthesize;
    spdlog::info("synthesize: {} {} profiles (K={})", sc.n_profiles, to_string(type), sc.k);
    record(std::string(to_string(type)), profiles::synthesize_batch(pool, sc, *ctx.backends.profile_nli), std::nullopt);
  }
  for (int level : ctx.cfg.profiles.levels) {
    record("level_" + std::to_string(level), profiles::build_level_pool(personas, level), level);
  }
  write_text_atomic(pdir / "summary.json", pretty(json{{"k", ctx.cfg.profiles.k}, {"pools", pools}}));
  r.outputs.push_back(pdir / "summary.json");
  return r;
}

StageResult stage_pair(Ctx& ctx) {
  const auto profiles = load_profile_map(ctx);
  std::map<ProfileType, std::vector<UserProfile>> by_type;
  std::map<int, std::vector<UserProfile>> by_level;
  for (const auto& [id, p] : profiles) {
    if (p.profile_type == ProfileType::level) {
      by_level[p.level.value_or(0)].push_back(p);
    } else {
      by_type[p.profile_type].push_back(p);
    }
  }
  std::vector<json> rows;
  StageResult r;
  for (const auto& plan : ctx.cfg.pairing) {
    const std::string type_name(pairing::to_string(plan.type));
    std::vector<pairing::ProfilePair> made;
    if (plan.type == pairing::PairingType::level_k) {
      for (int level : ctx.cfg.profiles.levels) {
        std::mt19937_64 rng(stream_seed(ctx.cfg.seed, "pair:level_" + std::to_string(level)));
        auto pairs = pairing::make_level_pairs(by_level[level], plan.n, rng);
        r.counts["level_" + std::to_string(level)] = pairs.size();
        made.insert(made.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
      }
    } else {
      std::mt19937_64 rng(stream_seed(ctx.cfg.seed, "pair:" + type_name));
      const ProfileType a = plan.type == pairing::PairingType::opposite ? ProfileType::negative
                            : plan.type == pairing::PairingType::original ? ProfileType::original
                                                                          : profile_type_from_string(type_name);
      const ProfileType b = plan.type == pairing::PairingType::opposite ? ProfileType::positive : a;
      made = pairing::make_pairs(by_type[a], by_type[b], plan.type, plan.n, rng);
      r.counts[type_name] = made.size();
    }
    for (const auto& p : made) rows.push_back(pairing::manifest_entry(p));
  }
  fs::create_directories(ctx.path("pairs"));
  write_jsonl(ctx.path("pairs/pairs.jsonl"), rows);
  r.counts["total"] = rows.size();
  r.outputs = {ctx.path("pairs/pairs.jsonl")};
  return r;
}

Dialogue errored(const pairing::ProfilePair& pair, const std::string& model, Strategy strategy, OrderingKind ordering,
                 const std::string& message) {
  Dialogue d;
  d.dialogue_id = dialogue::make_dialogue_id(pair.pair_id, model, strategy, ordering);
  d.pair_id = pair.pair_id;
  d.pairing_type = pair.pairing_type;
  d.level = pair.level;
  d.strategy = strategy;
  d.ordering = ordering;
  d.generator_model = model;
  d.filter_status = FilterStatus::rejected_error;
  d.raw = message;
  return d;
}

dialogue::TurnDistribution resolve_turns(const Ctx& ctx, const std::vector<Dialogue>& joint_kept) {
  const auto& g = ctx.cfg.generation;
  if (g.turn_source == "default") return dialogue::TurnDistribution::fallback();
  if (g.turn_source == "fixed") return dialogue::TurnDistribution(g.turn_distribution);
  if (g.turn_source == "joint") {
    try {
      return dialogue::TurnDistribution::estimate(joint_kept);
    } catch (const ConfigError& e) {
      spdlog::warn("generate: {}; using the default turn distribution", e.what());
      return dialogue::TurnDistribution::fallback();
    }
  }
  std::vector<Dialogue> external;
  for (const auto& row : read_jsonl(g.turn_source)) external.push_back(dialogue::dialogue_from_json(row));
  return dialogue::TurnDistribution::estimate(external);
}

std::string pair_digest(const std::vector<pairing::ProfilePair>& pairs) {
  std::string material;
  for (const auto& p : pairs) material += canonical_json(pairing::manifest_entry(p)) + "\n";
  return sha256_hex(material);
}

StageResult stage_generate(Ctx& ctx) {
  const auto index = load_scored_index(ctx);
  const auto profiles = load_profile_map(ctx);
  const auto pairs = load_pairs(ctx, profiles);
  const dialogue::GenerationContext gctx{&index, &ctx.templates};
  const auto& gen = ctx.cfg.generation;
  fs::create_directories(ctx.path("dialogues"));

  StageResult r;
  std::map<std::string, std::map<std::string, std::size_t>> conservation;
  json files = json::array();
  std::string reference_digest;
  for (std::size_t g = 0; g < ctx.backends.generators.size(); ++g) {
    auto& chat = *ctx.backends.generators[g];
    const std::string model = chat.spec().model_id;
    const std::string digest = pair_digest(pairs);
    if (reference_digest.empty()) reference_digest = digest;
    if (digest != reference_digest) throw Error("generator " + model + " saw a different pair manifest");
    ctx.pair_digests[model] = digest;

    std::vector<Dialogue> all;
    std::vector<Dialogue> joint_kept;
    auto run_batch = [&](Strategy strategy, OrderingKind ordering, const std::vector<int>& endpoints) {
      std::vector<Dialogue> out(pairs.size());
      bounded_for(pairs.size(), ctx.cfg.concurrency.generate, [&](std::size_t i) {
        const auto& pair = pairs[i];
        try {
          if (strategy == Strategy::joint) {
            out[i] = dialogue::generate_joint(pair, chat, gctx);
          } else {
            out[i] = dialogue::generate_turn_based(pair, endpoints[i], {ordering, gen.bias_a}, chat, gctx);
          }
        } catch (const dialogue::TurnGenerationError& e) {
          out[i] = e.partial();
          out[i].filter_status = FilterStatus::rejected_error;
          out[i].raw = e.what();
        } catch (const GenerationError& e) {
          out[i] = errored(pair, model, strategy, ordering, e.what());
        }
        out[i] = dialogue::filter_outliers(std::move(out[i]), gen.filter);
      });
      std::size_t failures = 0;
      for (const auto& d : out) failures += d.filter_status == FilterStatus::rejected_error ? 1 : 0;
      if (!out.empty() && failures == out.size()) {
        throw GenerationError("every " + std::string(dialogue::to_string(strategy)) + " generation with " + model +
                              " failed: " + out.front().raw);
      }
      for (auto& d : out) {
        const std::string key = model + "|" + std::string(dialogue::to_string(d.strategy)) + "|" +
                                std::string(dialogue::to_string(d.ordering)) + "|" +
                                std::string(pairing::to_string(d.pairing_type));
        auto& c = conservation[key];
        ++c["attempted"];
        ++c[std::string(dialogue::to_string(d.filter_status))];
        if (strategy == Strategy::joint && d.filter_status == FilterStatus::kept) joint_kept.push_back(d);
        all.push_back(std::move(d));
      }
    };

    if (std::find(gen.strategies.begin(), gen.strategies.end(), Strategy::joint) != gen.strategies.end()) {
      spdlog::info("generate: {} joint dialogues with {}", pairs.size(), model);
      run_batch(Strategy::joint, OrderingKind::none, {});
    }
    if (std::find(gen.strategies.begin(), gen.strategies.end(), Strategy::turn_based) != gen.strategies.end()) {
      const auto dist = resolve_turns(ctx, joint_kept);
      std::vector<int> endpoints(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::mt19937_64 rng(stream_seed(ctx.cfg.seed, "turns:" + pairs[i].pair_id));
        endpoints[i] = dialogue::sample_turn_endpoint(dist, rng);
      }
      for (OrderingKind ordering : gen.orderings) {
        spdlog::info("generate: {} turn-based dialogues ({}) with {}", pairs.size(), dialogue::to_string(ordering),
                     model);
        run_batch(Strategy::turn_based, ordering, endpoints);
      }
    }

    const std::string file = model_slug(model) + ".jsonl";
    std::vector<json> rows;
    rows.reserve(all.size());
    for (const auto& d : all) rows.push_back(dialogue::to_json(d));
    write_jsonl(ctx.path("dialogues") / file, rows);
    files.push_back({{"generator_model", model}, {"file", file}, {"pair_manifest_digest", digest}});
    r.outputs.push_back(ctx.path("dialogues") / file);
  }

  json groups = json::array();
  std::size_t attempted = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> by_status;
  for (const auto& [key, c] : conservation) {
    json row{{"group", key}};
    std::size_t sum = 0;
    for (const auto& [name, n] : c) {
      row[name] = n;
      if (name != "attempted") sum += n;
      if (name != "attempted") by_status[name] += n;
    }
    if (sum != c.at("attempted")) throw Error("generate: kept + rejected != attempted for " + key);
    attempted += c.at("attempted");
    kept += c.count("kept") ? c.at("kept") : 0;
    groups.push_back(row);
  }
  write_text_atomic(ctx.path("dialogues/counts.json"), pretty(json{{"files", files}, {"groups", groups}}));
  r.outputs.push_back(ctx.path("dialogues/counts.json"));
  r.counts = {{"attempted", attempted}, {"kept", kept}, {"by_status", by_status}};
  return r;
}

std::vector<Dialogue> load_dialogues(const Ctx& ctx) {
  require(ctx.path("dialogues/counts.json"), Stage::generate);
  const json counts = json::parse(read_text(ctx.path("dialogues/counts.json")));
  std::vector<Dialogue> out;
  for (const auto& f : counts.at("files")) {
    for (const auto& row : read_jsonl(ctx.path("dialogues") / f.at("file").get<std::string>())) {
      out.push_back(dialogue::dialogue_from_json(row));
    }
  }
  return out;
}

bool wants(const ExperimentConfig& cfg, Metric m) {
  return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end();
}

StageResult stage_evaluate(Ctx& ctx) {
  const auto index = load_scored_index(ctx);
  const auto profiles = load_profile_map(ctx);
  const auto pairs = load_pairs(ctx, profiles);
  std::map<std::string, const pairing::ProfilePair*> pair_by_id;
  for (const auto& p : pairs) pair_by_id[p.pair_id] = &p;

  std::vector<Dialogue> kept;
  for (auto& d : load_dialogues(ctx)) {
    if (d.filter_status == FilterStatus::kept) kept.push_back(std::move(d));
  }
  const auto& cfg = ctx.cfg;
  const bool consistency = wants(cfg, Metric::c_score) || wants(cfg, Metric::contd);
  const bool ppl = wants(cfg, Metric::perplexity) || wants(cfg, Metric::p_gap);

  std::vector<metrics::DialogueMetrics> reports(kept.size());
  std::vector<metrics::VerdictMatrix> verdicts(kept.size());
  std::atomic<std::size_t> metric_errors{0};
  std::atomic<std::size_t> geval_failures{0};

  spdlog::info("evaluate: {} kept dialogues", kept.size());
  bounded_for(kept.size(), cfg.concurrency.evaluate, [&](std::size_t i) {
    const Dialogue& d = kept[i];
    auto it = pair_by_id.find(d.pair_id);
    if (it == pair_by_id.end()) throw Error("dialogue " + d.dialogue_id + " references unknown pair " + d.pair_id);
    const auto u1 = index.texts(it->second->first);
    const auto u2 = index.texts(it->second->second);
    auto& m = reports[i];
    m.dialogue_id = d.dialogue_id;
    m.pair_id = d.pair_id;
    m.keys = {{"pairing_type", std::string(pairing::to_string(d.pairing_type))},
              {"generator_model", d.generator_model},
              {"strategy", std::string(dialogue::to_string(d.strategy))},
              {"ordering", std::string(dialogue::to_string(d.ordering))}};
    if (d.level) m.keys["level"] = std::to_string(*d.level);
    m.n_utterances = d.utterances.size();
    for (const auto& u : d.utterances) m.n_words += word_count(u.text);

    if (consistency) verdicts[i] = metrics::collect_verdicts(d.utterances, u1, u2, *ctx.backends.metric_nli);
    if (ppl) {
      try {
        const auto pp = metrics::perplexity_pair(d, u1, u2, *ctx.backends.logprob);
        if (wants(cfg, Metric::perplexity)) m.at(Metric::perplexity) = pp.unconditional;
        if (wants(cfg, Metric::p_gap)) m.at(Metric::p_gap) = pp.gap();
      } catch (const MetricError& e) {
        spdlog::warn("evaluate: {}", e.what());
        ++metric_errors;
      }
    }
    for (auto [metric, scorer] : {std::pair{Metric::qdce, ctx.backends.qdce.get()},
                                  std::pair{Metric::paireval, ctx.backends.paireval.get()}}) {
      if (!wants(cfg, metric)) continue;
      try {
        m.at(metric) = metrics::prefix_coherence(d.utterances, *scorer);
      } catch (const MetricError& e) {
        spdlog::warn("evaluate: {} on {}: {}", metrics::metric_key(metric), d.dialogue_id, e.what());
        ++metric_errors;
      }
    }
    for (auto [metric, dim] : {std::pair{Metric::geval_consistency, metrics::GevalDimension::consistency},
                               std::pair{Metric::geval_coherence, metrics::GevalDimension::coherence}}) {
      if (!wants(cfg, metric)) continue;
      const auto score = metrics::g_eval(d, u1, u2, dim, *ctx.backends.judge, ctx.templates, cfg.geval_retries);
      if (score) {
        m.at(metric) = *score;
      } else {
        ++geval_failures;
      }
    }
  });

  if (consistency) {
    const auto c = metrics::consistency_batch_parallel(verdicts);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      auto& m = reports[i];
      m.entail_count = c[i].entail_count;
      m.contradiction_count = c[i].contradiction_count;
      if (wants(cfg, Metric::c_score)) m.at(Metric::c_score) = c[i].c_score;
      if (wants(cfg, Metric::contd)) m.at(Metric::contd) = c[i].contd;
    }
  }

  fs::create_directories(ctx.path("metrics"));
  std::vector<json> rows;
  rows.reserve(reports.size());
  for (const auto& m : reports) rows.push_back(metrics::to_json(m));
  write_jsonl(ctx.path("metrics/dialogue_metrics.jsonl"), rows);
  const auto groups = metrics::aggregate(reports, report::kGroupKeys);
  write_text_atomic(ctx.path("metrics/aggregate.csv"), report::aggregate_csv(groups));

  StageResult r;
  r.counts = {{"evaluated", reports.size()},
              {"groups", groups.size()},
              {"metric_errors", metric_errors.load()},
              {"geval_unparsed", geval_failures.load()}};
  r.outputs = {ctx.path("metrics/dialogue_metrics.jsonl"), ctx.path("metrics/aggregate.csv")};
  return r;
}

StageResult stage_report(Ctx& ctx) {
  const auto index = load_scored_index(ctx);
  const auto profiles = load_profile_map(ctx);
  const auto pairs = load_pairs(ctx, profiles);
  require(ctx.path("metrics/dialogue_metrics.jsonl"), Stage::evaluate);
  std::vector<metrics::DialogueMetrics> reports;
  for (const auto& row : read_jsonl(ctx.path("metrics/dialogue_metrics.jsonl"))) {
    reports.push_back(metrics::dialogue_metrics_from_json(row));
  }
  const auto groups = metrics::aggregate(reports, report::kGroupKeys);
  const auto rows = report::table1_rows(groups, ctx.cfg.metrics);

  std::vector<UserProfile> corpus_profiles;
  for (const auto& [id, p] : profiles) {
    if (p.profile_type == ProfileType::original) corpus_profiles.push_back(p);
  }
  report::StatsInputs stats;
  stats.corpus = corpus::corpus_stats(corpus_profiles, index.all());
  const json summary = json::parse(read_text(ctx.path("profiles/summary.json")));
  for (const auto& pool : summary.at("pools")) {
    if (pool.contains("level")) continue;
    stats.synthesized.push_back({pool.at("name").get<std::string>(), pool.at("n_profiles").get<std::size_t>(),
                                 pool.at("mean_profile_words").get<double>()});
  }
  stats.dialogues = reports;
  for (const auto& p : pairs) {
    double words = 0.0;
    for (const auto* prof : {&p.first, &p.second}) {
      for (const auto& t : index.texts(*prof)) words += static_cast<double>(word_count(t));
    }
    stats.pair_profile_words[p.pair_id] = words;
  }

  const auto medians = report::level_medians(index.all());
  report::Bundle bundle;
  bundle.table1 = report::table1_csv(rows);
  bundle.levels = report::levels_csv(medians, stats.corpus.counts_per_level, groups, ctx.cfg.metrics);
  bundle.stats = report::stats_csv(stats);
  bundle.plot_data = pretty(report::plot_data(medians, rows, ctx.cfg.metrics));
  report::write_bundle(ctx.path("report"), bundle);

  StageResult r;
  r.counts = {{"table1_rows", rows.size()}};
  for (const char* f : {"table1.csv", "levels.csv", "stats.csv", "plot_data.json"}) {
    r.outputs.push_back(ctx.path("report") / f);
  }
  return r;
}

StageResult run_stage(Stage s, Ctx& ctx) {
  switch (s) {
    case Stage::ingest: return stage_ingest(ctx);
    case Stage::score: return stage_score(ctx);
    case Stage::synthesize: return stage_synthesize(ctx);
    case Stage::pair: return stage_pair(ctx);
    case Stage::generate: return stage_generate(ctx);
    case Stage::evaluate: return stage_evaluate(ctx);
    case Stage::report: return stage_report(ctx);
  }
  throw Error("unknown stage");
}

// ---- fingerprints and markers --------------------------------------------------

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::ingest: return {};
    case Stage::score: return {Stage::ingest};
    case Stage::synthesize: return {Stage::score};
    case Stage::pair: return {Stage::ingest, Stage::synthesize};
    case Stage::generate: return {Stage::score, Stage::synthesize, Stage::pair};
    case Stage::evaluate: return {Stage::score, Stage::synthesize, Stage::pair, Stage::generate};
    case Stage::report: return {Stage::ingest, Stage::score, Stage::synthesize, Stage::pair, Stage::evaluate};
  }
  return {};
}

json model_ids(const std::vector<backends::BackendSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) out.push_back(s.model_id);
  return out;
}

json stage_params(Stage s, const Ctx& ctx) {
  const json c = config::to_json(ctx.cfg);
  const auto& b = ctx.cfg.backends;
  switch (s) {
    case Stage::ingest:
      return {{"corpus_sha256", sha256_file(ctx.cfg.corpus_path)}, {"format", c["corpus"]["format"]}};
    case Stage::score: return {{"classifier", b.classifier.model_id}, {"threshold", ctx.cfg.threshold}};
    case Stage::synthesize:
      return {{"profiles", c["profiles"]}, {"threshold", ctx.cfg.threshold}, {"seed", ctx.cfg.seed},
              {"nli", b.profile_nli.model_id}};
    case Stage::pair:
      return {{"pairing", c["pairing"]}, {"levels", c["profiles"]["levels"]}, {"seed", ctx.cfg.seed}};
    case Stage::generate:
      return {{"generation", c["generation"]},
              {"generators", model_ids(b.generators)},
              {"seed", ctx.cfg.seed},
              {"joint", ctx.templates.joint.text()},
              {"turn_based", ctx.templates.turn_based.text()}};
    case Stage::evaluate:
      return {{"metrics", c["metrics"]},
              {"geval_retries", ctx.cfg.geval_retries},
              {"models", model_ids({b.metric_nli, b.logprob, b.qdce, b.paireval, b.judge})},
              {"geval", ctx.templates.geval_consistency.text() + ctx.templates.geval_coherence.text()}};
    case Stage::report: return {{"metrics", c["metrics"]}};
  }
  return nullptr;
}

fs::path marker_path(const fs::path& dir, Stage s) { return dir / ".stages" / (std::string(to_string(s)) + ".json"); }

std::optional<json> read_marker(const fs::path& dir, Stage s) {
  const auto p = marker_path(dir, s);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(read_text(p));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool outputs_intact(const fs::path& dir, const json& marker) {
  for (const auto& [rel_path, digest] : marker.at("outputs").items()) {
    const fs::path p = dir / rel_path;
    if (!fs::exists(p) || sha256_file(p) != digest.get<std::string>()) return false;
  }
  return true;
}

std::string fingerprint(Stage s, const Ctx& ctx) {
  std::string material(to_string(s));
  material += "\n" + canonical_json(stage_params(s, ctx)) + "\n";
  for (Stage up : upstream_of(s)) {
    const auto marker = read_marker(ctx.dir, up);
    if (!marker) continue;
    for (const auto& [rel_path, digest] : marker->at("outputs").items()) {
      material += rel_path + "\t" + digest.get<std::string>() + "\n";
    }
  }
  return sha256_hex(material);
}

}  // namespace

// ---- public API ------------------------------------------------------------------

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::score: return "score";
    case Stage::synthesize: return "synthesize";
    case Stage::pair: return "pair";
    case Stage::generate: return "generate";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view name) {
  for (Stage s : kStages) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view label) {
  const std::string h = sha256_hex(label);
  return profiles::derive_seed(seed, std::stoull(h.substr(0, 16), nullptr, 16));
}

std::string model_slug(std::string_view model_id) {
  std::string out;
  for (char c : model_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
    out += ok ? c : '_';
  }
  return out.empty() ? "model" : out;
}

BackendSet::BackendSet(std::shared_ptr<backends::ResponseCache> cache) : cache_(std::move(cache)) {}

std::shared_ptr<backends::Backend> BackendSet::attach(const std::string& role,
                                                      std::shared_ptr<backends::Backend> inner) {
  auto& counter = counters_[role];
  if (!counter) counter = std::make_shared<std::atomic<std::uint64_t>>(0);
  return backends::assemble(std::make_shared<CountingBackend>(std::move(inner), counter), cache_);
}

json BackendSet::call_counts() const {
  json out = json::object();
  for (const auto& [role, n] : counters_) out[role] = n->load();
  return out;
}

std::uint64_t BackendSet::total_calls() const {
  std::uint64_t total = 0;
  for (const auto& [role, n] : counters_) total += n->load();
  return total;
}

std::unique_ptr<BackendSet> make_backends(const ExperimentConfig& cfg) {
  const auto cache_dir = cfg.effective_cache_dir();
  fs::create_directories(cache_dir);
  auto set = std::make_unique<BackendSet>(std::make_shared<backends::ResponseCache>(cache_dir));
  auto transport = std::make_shared<backends::HttplibTransport>();
  auto inner = [&](const backends::BackendSpec& spec) -> std::shared_ptr<backends::Backend> {
    if (cfg.mock) return mocks::make(spec);
    return std::make_shared<backends::HttpBackend>(spec, transport);
  };
  set->classifier = set->attach("classifier", inner(cfg.backends.classifier));
  set->profile_nli = set->attach("profile_nli", inner(cfg.backends.profile_nli));
  set->metric_nli = set->attach("metric_nli", inner(cfg.backends.metric_nli));
  set->logprob = set->attach("logprob", inner(cfg.backends.logprob));
  set->qdce = set->attach("qdce", inner(cfg.backends.qdce));
  set->paireval = set->attach("paireval", inner(cfg.backends.paireval));
  set->judge = set->attach("judge", inner(cfg.backends.judge));
  for (const auto& g : cfg.backends.generators) {
    set->generators.push_back(set->attach("generator:" + g.model_id, inner(g)));
  }
  return set;
}

const StageRecord* RunManifest::find(Stage s) const {
  for (const auto& r : stages) {
    if (r.stage == s) return &r;
  }
  return nullptr;
}

json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    stages.push_back({{"stage", to_string(s.stage)},
                      {"status", s.status},
                      {"seconds", s.seconds},
                      {"counts", s.counts},
                      {"outputs", s.outputs},
                      {"fingerprint", s.fingerprint}});
  }
  return json{{"version", m.version},
              {"status", m.status},
              {"failing_stage", m.failing_stage ? json(*m.failing_stage) : json(nullptr)},
              {"error", m.error},
              {"stages", stages},
              {"backend_calls", m.backend_calls},
              {"pair_manifest_digests", m.pair_manifest_digests},
              {"digest", m.digest},
              {"config", m.config}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.version = j.value("version", std::string(kVersion));
  m.status = j.value("status", "pending");
  if (j.contains("failing_stage") && !j["failing_stage"].is_null()) m.failing_stage = j["failing_stage"].get<std::string>();
  m.error = j.value("error", "");
  for (const auto& s : j.value("stages", json::array())) {
    StageRecord r;
    r.stage = stage_from_string(s.at("stage").get<std::string>());
    r.status = s.value("status", "not_run");
    r.seconds = s.value("seconds", 0.0);
    r.counts = s.value("counts", json::object());
    r.outputs = s.value("outputs", std::vector<std::string>{});
    r.fingerprint = s.value("fingerprint", "");
    m.stages.push_back(std::move(r));
  }
  m.backend_calls = j.value("backend_calls", json::object());
  m.pair_manifest_digests = j.value("pair_manifest_digests", std::map<std::string, std::string>{});
  m.digest = j.value("digest", "");
  m.config = j.value("config", json::object());
  return m;
}

std::string output_digest(const fs::path& run_dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const char* sub : kOutputDirs) {
    const fs::path d = run_dir / sub;
    if (!fs::exists(d)) continue;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (!e.is_regular_file()) continue;
      const std::string name = e.path().filename().string();
      if (name.find(".tmp") != std::string::npos) continue;
      files.emplace_back(rel(run_dir, e.path()), sha256_file(e.path()));
    }
  }
  std::sort(files.begin(), files.end());
  std::string material;
  for (const auto& [p, d] : files) material += p + "\t" + d + "\n";
  return sha256_hex(material);
}

RunManifest run_stages(const ExperimentConfig& cfg, const std::vector<Stage>& stages, const RunOptions& options,
                       BackendSet* backends) {
  if (cfg.sweep) throw ConfigError("config has a sweep; run it with run_sweep");
  cfg.validate();
  fs::create_directories(cfg.run_dir);
  for (const char* sub : kOutputDirs) fs::create_directories(cfg.run_dir / sub);
  fs::create_directories(cfg.run_dir / ".stages");

  std::unique_ptr<BackendSet> owned;
  if (backends == nullptr) {
    owned = make_backends(cfg);
    backends = owned.get();
  }
  Ctx ctx{cfg, cfg.run_dir, *backends,
          cfg.templates_dir.empty() ? prompts::TemplateSet::defaults() : prompts::TemplateSet::load(cfg.templates_dir),
          {}};

  RunManifest manifest;
  const fs::path manifest_path = cfg.run_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      manifest = manifest_from_json(json::parse(read_text(manifest_path)));
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable manifest {}: {}", manifest_path.string(), e.what());
      manifest = RunManifest{};
    }
  }
  manifest.version = std::string(kVersion);
  manifest.config = config::to_json(cfg);
  manifest.failing_stage.reset();
  manifest.error.clear();
  // One record per stage, in pipeline order.
  std::vector<StageRecord> records;
  for (Stage s : kStages) {
    const StageRecord* old = manifest.find(s);
    StageRecord r = old ? *old : StageRecord{};
    r.stage = s;
    records.push_back(std::move(r));
  }
  manifest.stages = std::move(records);

  std::vector<Stage> todo = stages;
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());

  for (Stage s : todo) {
    auto& record = manifest.stages[static_cast<std::size_t>(s)];
    const auto start = std::chrono::steady_clock::now();
    try {
      const std::string fp = fingerprint(s, ctx);
      if (options.resume) {
        if (auto marker = read_marker(ctx.dir, s);
            marker && marker->value("fingerprint", "") == fp && outputs_intact(ctx.dir, *marker)) {
          spdlog::info("{}: up to date, skipped", to_string(s));
          record.status = "resumed";
          record.fingerprint = fp;
          record.seconds = 0.0;
          if (s == Stage::generate && marker->contains("pair_manifest_digests")) {
            for (const auto& [model, d] : marker->at("pair_manifest_digests").items()) {
              ctx.pair_digests[model] = d.get<std::string>();
            }
          }
          continue;
        }
      }
      spdlog::info("{}: running", to_string(s));
      StageResult result = run_stage(s, ctx);
      json marker{{"stage", to_string(s)}, {"fingerprint", fp}, {"outputs", json::object()}};
      record.outputs.clear();
      for (const auto& p : result.outputs) {
        marker["outputs"][rel(ctx.dir, p)] = sha256_file(p);
        record.outputs.push_back(rel(ctx.dir, p));
      }
      if (s == Stage::generate) marker["pair_manifest_digests"] = ctx.pair_digests;
      write_text_atomic(marker_path(ctx.dir, s), pretty(marker));
      record.status = "done";
      record.fingerprint = fp;
      record.counts = std::move(result.counts);
    } catch (const std::exception& e) {
      record.status = "failed";
      manifest.failing_stage = std::string(to_string(s));
      manifest.error = e.what();
      spdlog::error("{} failed: {}", to_string(s), e.what());
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (manifest.failing_stage) break;
  }

  if (!ctx.pair_digests.empty()) manifest.pair_manifest_digests = ctx.pair_digests;
  manifest.backend_calls = backends->call_counts();
  bool all_done = true;
  for (const auto& r : manifest.stages) all_done = all_done && (r.status == "done" || r.status == "resumed");
  manifest.status = manifest.failing_stage ? "failed" : all_done ? "complete" : "partial";
  manifest.digest = output_digest(cfg.run_dir);
  write_text_atomic(manifest_path, pretty(to_json(manifest)));
  return manifest;
}

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options, BackendSet* backends) {
  return run_stages(cfg, {kStages.begin(), kStages.end()}, options, backends);
}

std::vector<RunManifest> run_sweep(const ExperimentConfig& cfg, const RunOptions& options) {
  std::vector<RunManifest> out;
  for (const auto& sub : config::expand_sweep(cfg)) {
    spdlog::info("sweep: run {}", sub.run_dir.string());
    out.push_back(run_experiment(sub, options));
    if (out.back().status == "failed") break;
  }
  return out;
}

}  // namespace polardial::runner
