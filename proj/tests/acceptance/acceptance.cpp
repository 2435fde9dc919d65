// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "polardial/backends.hpp"
#include "polardial/config.hpp"
#include "polardial/corpus.hpp"
#include "polardial/dialogue_gen.hpp"
#include "polardial/metrics.hpp"
#include "polardial/pairing.hpp"
#include "polardial/polarity.hpp"
#include "polardial/profile_builder.hpp"
#include "polardial/runner.hpp"

namespace {

using namespace polardial;
using json = nlohmann::json;
using backends::Capability;
using backends::MockBackend;
using dialogue::Speaker;
using dialogue::Utterance;

// Outcome of one criterion: passed, or skipped with a reason.
struct Outcome {
  bool ok = false;
  bool skipped = false;
  std::string detail;
};

Outcome pass(std::string detail) { return {true, false, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, false, std::move(detail)}; }

backends::BackendSpec mock_spec(Capability c) {
  backends::BackendSpec s;
  s.capability = c;
  s.endpoint = "mock:";
  s.model_id = "mock";
  return s;
}

std::string format_number(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const char* label_of(int v) { return v > 0 ? "entailment" : v < 0 ? "contradiction" : "neutral"; }

std::vector<Utterance> alternate(const std::vector<std::string>& texts) {
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({static_cast<int>(i + 1), i % 2 == 0 ? Speaker::user1 : Speaker::user2, texts[i]});
  }
  return out;
}

Outcome c_score_oracle() {
  std::mt19937_64 rng(20240601);
  std::size_t mismatches = 0;
  std::size_t verdicts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 20)(rng);
    const int k1 = std::uniform_int_distribution<int>(1, 10)(rng);
    const int k2 = std::uniform_int_distribution<int>(1, 10)(rng);
    std::vector<std::string> p1, p2, texts;
    for (int k = 0; k < k1; ++k) p1.push_back("t" + std::to_string(trial) + " persona a" + std::to_string(k));
    for (int k = 0; k < k2; ++k) p2.push_back("t" + std::to_string(trial) + " persona b" + std::to_string(k));
    for (int i = 0; i < n; ++i) texts.push_back("t" + std::to_string(trial) + " utterance " + std::to_string(i));

    MockBackend nli(mock_spec(Capability::nli));
    std::map<std::pair<std::string, std::string>, int> script;
    for (int i = 0; i < n; ++i) {
      for (const auto& p : (i % 2 == 0 ? p1 : p2)) {
        const int v = std::uniform_int_distribution<int>(-1, 1)(rng);
        script[{texts[i], p}] = v;
        nli.script(json{{"premise", texts[i]}, {"hypothesis", p}}, json{{"label", label_of(v)}});
      }
    }
    const auto got = metrics::dialogue_c_score(alternate(texts), p1, p2, nli, 4);

    // Brute force: enumerate every (utterance, persona) pair independently.
    long sum = 0;
    long e = 0;
    long c = 0;
    for (int i = 0; i < n; ++i) {
      for (const auto& p : (i % 2 == 0 ? p1 : p2)) {
        const int v = script.at({texts[i], p});
        sum += v;
        e += v == 1;
        c += v == -1;
        ++verdicts;
      }
    }
    const double want_c = static_cast<double>(sum) / n;
    const std::optional<double> want_contd =
        e + c > 0 ? std::optional<double>(100.0 * static_cast<double>(c) / static_cast<double>(e + c)) : std::nullopt;
    if (got.c_score != want_c || got.contd != want_contd || got.entail_count != static_cast<std::size_t>(e) ||
        got.contradiction_count != static_cast<std::size_t>(c)) {
      ++mismatches;
    }
  }
  const std::string d = "200 dialogues, " + std::to_string(verdicts) + " verdicts, " + std::to_string(mismatches) +
                        " mismatches";
  return mismatches == 0 ? pass(d) : fail(d);
}

Outcome worked_example() {
  metrics::VerdictMatrix m;
  m.add_row(std::vector<std::int8_t>{0, 0, 0, 1, 0});
  m.add_row(std::vector<std::int8_t>{1, 1, 1, -1, 0});
  const auto r = metrics::consistency_from_verdicts(m);
  const bool ok = r.per_utterance == std::vector<int>{1, 2} && r.c_score == 1.5 && r.entail_count == 4 &&
                  r.contradiction_count == 1 && r.contd && *r.contd == 20.0;
  std::ostringstream d;
  d << "C(u)=[" << r.per_utterance.at(0) << "," << r.per_utterance.at(1) << "] C(D)=" << r.c_score
    << " E#=" << r.entail_count << " C#=" << r.contradiction_count << " Contd.=" << (r.contd ? *r.contd : -1.0);
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome binning() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> samples(1000000);
  for (auto& s : samples) s = u(rng);
  samples.front() = 0.0;
  samples.back() = 1.0;

  // Intervals written out independently of the library: (lo, hi], level 1 closed at 0.
  const double edges[] = {0.0, 0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.99, 1.0};
  std::size_t violations = 0;
  std::vector<int> levels(samples.size());
  polarity::bin_levels_parallel(samples, levels);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double s = samples[i];
    int hits = 0;
    int which = 0;
    for (int l = 1; l <= 9; ++l) {
      const bool in = (l == 1 ? s >= edges[0] : s > edges[l - 1]) && s <= edges[l];
      if (in) {
        ++hits;
        which = l;
      }
    }
    const auto b = polarity::level_bounds(which == 0 ? 1 : which);
    if (hits != 1 || levels[i] != which || polarity::level_from_score(PolarityScore(s)).level != which ||
        b.hi != edges[which]) {
      ++violations;
    }
  }
  std::size_t boundary_errors = 0;
  for (int l = 1; l <= 8; ++l) {
    if (polarity::level_from_score(PolarityScore(polarity::kUpperEdges[l - 1])).level != l) ++boundary_errors;
  }
  const std::string d = std::to_string(violations) + " violations over 1e6 samples, " +
                        std::to_string(boundary_errors) + " boundary errors";
  return violations == 0 && boundary_errors == 0 ? pass(d) : fail(d);
}

Outcome ordering() {
  auto run = [](const std::vector<double>& scores, dialogue::OrderingKind kind) {
    std::vector<Persona> personas;
    UserProfile p{"p", {}, ProfileType::mixed, std::nullopt};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      Persona x;
      x.persona_id = "x" + std::to_string(i);
      x.text = x.persona_id;
      x.polarity = PolarityScore(scores[i]);
      personas.push_back(x);
      p.personas.push_back(x.persona_id);
    }
    const PersonaIndex idx(personas);
    const auto out = dialogue::order_profile(p, {kind, 0.05}, idx);
    std::vector<double> ordered;
    for (const auto& id : out.personas) ordered.push_back(idx.at(id).polarity->value());
    return ordered;
  };
  const auto ex = run({0.995, 0.005, 0.45}, dialogue::OrderingKind::c_asc);
  if (ex != std::vector<double>{0.45, 0.005, 0.995}) return fail("c_asc example order differs");

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    std::set<double> distinct;
    while (distinct.size() < n) distinct.insert(u(rng));
    std::vector<double> scores(distinct.begin(), distinct.end());
    std::shuffle(scores.begin(), scores.end(), rng);
    const auto asc = run(scores, dialogue::OrderingKind::asc);
    auto dsc = run(scores, dialogue::OrderingKind::dsc);
    std::reverse(dsc.begin(), dsc.end());
    if (asc != dsc) ++bad;
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    for (auto kind : {dialogue::OrderingKind::none, dialogue::OrderingKind::asc, dialogue::OrderingKind::dsc,
                      dialogue::OrderingKind::c_asc}) {
      auto out = run(scores, kind);
      std::sort(out.begin(), out.end());
      if (out != sorted) ++bad;
    }
  }
  const std::string d = "c_asc example ok, " + std::to_string(bad) + " failures over 1e4 random lists";
  return bad == 0 ? pass(d) : fail(d);
}

Outcome synthesis_invariant() {
  std::vector<Persona> personas;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    Persona p;
    p.persona_id = "n" + std::to_string(i);
    p.text = "negative persona " + std::to_string(i);
    p.polarity = PolarityScore(0.001 + 0.008 * (i % 10) / 10.0);
    personas.push_back(p);
  }
  // Script contradictions between texts i and i+1, i+7 (mod 200).
  std::set<std::pair<std::string, std::string>> contradicting;
  for (int i = 0; i < 200; ++i) {
    for (int off : {1, 7}) {
      const auto a = personas[i].text;
      const auto b = personas[(i + off) % 200].text;
      contradicting.insert({a, b});
    }
  }
  auto is_contra = [&](const std::string& a, const std::string& b) {
    return contradicting.count({a, b}) != 0 || contradicting.count({b, a}) != 0;
  };
  MockBackend nli(mock_spec(Capability::nli), [&](const json& r) {
    const bool hit = is_contra(r.at("premise").get<std::string>(), r.at("hypothesis").get<std::string>());
    return json{{"label", hit ? "contradiction" : "neutral"}};
  });
  profiles::LabeledPool pool(personas, 0.99);
  profiles::SynthesisConfig cfg;
  cfg.k = 5;
  cfg.profile_type = ProfileType::negative;
  cfg.n_profiles = 1000;
  cfg.seed = 31;
  const auto out = profiles::synthesize_batch(pool, cfg, nli);
  const PersonaIndex idx(personas);
  std::size_t violations = 0;
  std::size_t checked = 0;
  for (const auto& p : out) {
    for (std::size_t i = 0; i < p.personas.size(); ++i) {
      for (std::size_t j = i + 1; j < p.personas.size(); ++j) {
        ++checked;
        if (is_contra(idx.at(p.personas[i]).text, idx.at(p.personas[j]).text)) ++violations;
      }
    }
  }
  const std::string d = std::to_string(out.size()) + " profiles, " + std::to_string(checked) + " pairs rechecked, " +
                        std::to_string(violations) + " violations";
  return out.size() == 1000 && violations == 0 ? pass(d) : fail(d);
}

Outcome opposite_balance() {
  std::vector<UserProfile> neg, pos;
  for (int i = 0; i < 80; ++i) {
    neg.push_back({"neg-" + std::to_string(i), {"n" + std::to_string(i)}, ProfileType::negative, std::nullopt});
    pos.push_back({"pos-" + std::to_string(i), {"p" + std::to_string(i)}, ProfileType::positive, std::nullopt});
  }
  std::mt19937_64 rng(12);
  const auto pairs = pairing::make_pairs(neg, pos, pairing::PairingType::opposite, 3000, rng);
  std::size_t neg_first = 0;
  for (const auto& p : pairs) neg_first += p.first.profile_type == ProfileType::negative;
  const std::string d = std::to_string(pairs.size()) + " pairs, " + std::to_string(neg_first) + " negative-first";
  return pairs.size() == 3000 && neg_first == 1500 ? pass(d) : fail(d);
}

Outcome turn_endpoints() {
  const auto dist = dialogue::TurnDistribution::fallback();
  std::mt19937_64 rng(77);
  std::map<int, std::size_t> counts;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) ++counts[dialogue::sample_turn_endpoint(dist, rng)];
  double l1 = 0.0;
  for (const auto& [t, p] : std::map<int, double>{{8, 0.6}, {10, 0.4}}) {
    l1 += std::abs(static_cast<double>(counts[t]) / n - p);
  }
  for (const auto& [t, c] : counts) {
    if (t != 8 && t != 10) l1 += static_cast<double>(c) / n;
  }
  const std::string d = "freq(8)=" + format_number("%.4f", static_cast<double>(counts[8]) / n) +
                        " freq(10)=" + format_number("%.4f", static_cast<double>(counts[10]) / n) + " L1=" + format_number("%.4f", l1);
  return l1 <= 0.01 ? pass(d) : fail(d);
}

std::shared_ptr<MockBackend> per_word_lm(double unconditional, double conditional) {
  return std::make_shared<MockBackend>(mock_spec(Capability::logprob), [=](const json& r) {
    const auto n = word_count(r.at("continuation").get<std::string>());
    const double lp = r.at("context").get<std::string>().empty() ? unconditional : conditional;
    return json{{"token_logprobs", std::vector<double>(n, lp)}};
  });
}

Outcome perplexity_fixtures() {
  const double ln2 = std::log(2.0), ln4 = std::log(4.0), ln8 = std::log(8.0);
  const double uniform = metrics::perplexity_from_logprobs(std::vector<double>(17, -ln4));
  const double mixed = metrics::perplexity_from_logprobs(std::vector<double>{-ln2, -ln8});
  dialogue::Dialogue d;
  d.dialogue_id = "fixture";
  d.utterances = alternate({"hi there friend", "hello how are you today"});
  const double same = metrics::perplexity_gap(d, {"i like a."}, {"i like b."}, *per_word_lm(-ln4, -ln4));
  const double easier = metrics::perplexity_gap(d, {"i like a."}, {"i like b."}, *per_word_lm(-ln4, -ln2));
  const bool ok = std::abs(uniform - 4.0) <= 1e-9 && std::abs(mixed - 4.0) <= 1e-9 && same == 0.0 &&
                  std::abs(easier + 2.0) <= 1e-9;
  const std::string det = "uniform=" + format_number("%.12f", uniform) + " mixed=" + format_number("%.12f", mixed) +
                          " gap(same)=" + format_number("%.12f", same) + " gap=" + format_number("%.12f", easier);
  return ok ? pass(det) : fail(det);
}

Outcome coherence_fixtures() {
  MockBackend constant(mock_spec(Capability::scorer),
                       [](const json&) { return json{{"score", 3.0}, {"scale", {1.0, 5.0}}}; });
  const double a = metrics::prefix_coherence(alternate({"a", "b", "c", "d", "e"}), constant);
  std::vector<double> outs{2.0, 4.0};
  std::size_t next = 0;
  MockBackend scripted(mock_spec(Capability::scorer),
                       [&](const json&) { return json{{"score", outs.at(next++)}, {"scale", {1.0, 5.0}}}; });
  const double b = metrics::prefix_coherence(alternate({"a", "b", "c"}), scripted);
  const bool ok = a == 3.0 && constant.call_count() == 4 && b == 3.0 && scripted.call_count() == 2;
  const std::string d = "constant=" + format_number("%.3f", a) + " calls=" + std::to_string(constant.call_count()) +
                        " scripted=" + format_number("%.3f", b);
  return ok ? pass(d) : fail(d);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome end_to_end() {
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / ("polardial-acceptance-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(root);
  std::vector<runner::RunManifest> runs;
  for (const char* name : {"a", "b"}) {
    config::LoadOptions o;
    o.run_dir = root / name;
    const auto cfg = config::load_config(std::filesystem::path(POLARDIAL_SOURCE_DIR) / "configs/smoke.yaml", o);
    runs.push_back(runner::run_experiment(cfg));
  }
  std::string why;
  if (runs[0].status != "complete" || runs[1].status != "complete") {
    why = "run status " + runs[0].status + "/" + runs[1].status + " " + runs[0].error + runs[1].error;
  } else if (runs[0].digest != runs[1].digest) {
    why = "manifest digests differ";
  }
  for (const char* f : {"report/table1.csv", "report/levels.csv", "report/stats.csv", "report/plot_data.json"}) {
    if (why.empty() && slurp(root / "a" / f) != slurp(root / "b" / f)) why = std::string(f) + " differs";
  }
  const std::string table = slurp(root / "a" / "report/table1.csv");
  const std::string header = table.substr(0, table.find('\n'));
  std::size_t columns = 0;
  for (metrics::Metric m : metrics::kMetrics) {
    if (header.find("," + std::string(metrics::metric_key(m)) + "_flag") != std::string::npos) ++columns;
  }
  if (why.empty() && columns != 8) why = std::to_string(columns) + " of 8 metric columns";
  const std::string digest = runs[0].digest.substr(0, 16);
  std::filesystem::remove_all(root);
  return why.empty() ? pass("two runs, digest " + digest + ", 8 metric columns") : fail(why);
}

Outcome partition_replication() {
  const char* url = std::getenv("POLARDIAL_CLASSIFY_URL");
  const char* path = std::getenv("POLARDIAL_CONVAI2_PATH");
  if (!url || !path || !*url || !*path) {
    return {false, true, "set POLARDIAL_CLASSIFY_URL and POLARDIAL_CONVAI2_PATH to run"};
  }
  auto corpus = corpus::ingest_corpus(path, corpus::Format::convai2_text);
  backends::BackendSpec spec;
  spec.capability = Capability::classify;
  spec.endpoint = "env:POLARDIAL_CLASSIFY_URL";
  spec.model_id = "distilbert-base-uncased-finetuned-sst-2-english";
  auto classifier = backends::make_http_backend(spec, nullptr);
  const auto counts = polarity::partition_corpus(corpus.personas, *classifier, polarity::kDefaultThreshold, 8);
  auto within = [](std::size_t got, double want) { return std::abs(static_cast<double>(got) - want) <= 0.005 * want; };
  const bool ok = within(counts.positive, 2691) && within(counts.negative, 1006) && within(counts.neutral, 2429);
  const std::string d = std::to_string(counts.positive) + " positive / " + std::to_string(counts.negative) +
                        " negative / " + std::to_string(counts.neutral) + " neutral";
  return ok ? pass(d) : fail(d);
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "C-score oracle equivalence", 5.0, c_score_oracle},
      {2, "verdict-vector worked example", 0.0, worked_example},
      {3, "polarity binning", 2.0, binning},
      {4, "profile ordering", 0.0, ordering},
      {5, "profile synthesis contradiction-free", 0.0, synthesis_invariant},
      {6, "opposite-pairing balance", 0.0, opposite_balance},
      {7, "turn-endpoint matching", 0.0, turn_endpoints},
      {8, "perplexity fixtures", 0.0, perplexity_fixtures},
      {9, "prefix coherence", 0.0, coherence_fixtures},
      {10, "end-to-end determinism", 60.0, end_to_end},
      {11, "persona partition replication", 0.0, partition_replication},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.ok && c.budget_s > 0.0 && secs > c.budget_s) {
      o = fail(o.detail + "; over the " + format_number("%.0f", c.budget_s) + " s budget");
    }
    const char* verdict = o.skipped ? "SKIP" : o.ok ? "PASS" : "FAIL";
    if (!o.ok && !o.skipped) ++failures;
    std::printf("%s criterion %2d %-38s %7.3fs  %s\n", verdict, c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
