#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/backends.hpp"
#include "polardial/dialogue.hpp"
#include "polardial/kernels.hpp"
#include "polardial/prompts.hpp"

namespace polardial::metrics {

// +1 entailment, 0 neutral, -1 contradiction.
std::int8_t verdict_value(backends::NliLabel label);

// Sum of NLI(u, p) over the speaker's personas; premise = utterance,
// hypothesis = persona.
int utterance_c(std::string_view utterance, const std::vector<std::string>& personas, backends::Backend& nli);

// Verdict rows for every utterance against its own speaker's profile.
VerdictMatrix collect_verdicts(const std::vector<dialogue::Utterance>& utterances,
                               const std::vector<std::string>& user1_personas,
                               const std::vector<std::string>& user2_personas, backends::Backend& nli,
                               std::size_t max_in_flight = 1);

ConsistencyReport dialogue_c_score(const std::vector<dialogue::Utterance>& utterances,
                                   const std::vector<std::string>& user1_personas,
                                   const std::vector<std::string>& user2_personas, backends::Backend& nli,
                                   std::size_t max_in_flight = 1);

std::optional<double> contradiction_ratio(const std::vector<dialogue::Utterance>& utterances,
                                          const std::vector<std::string>& user1_personas,
                                          const std::vector<std::string>& user2_personas, backends::Backend& nli,
                                          std::size_t max_in_flight = 1);

// exp(-mean token log-probability) of text scored without context.
double perplexity(std::string_view text, backends::Backend& lm);

// "User 1 persona:\n<lines>\nUser 2 persona:\n<lines>\n\n".
std::string conditioning_prefix(const std::vector<std::string>& user1_personas,
                                const std::vector<std::string>& user2_personas);

struct PerplexityPair {
  double unconditional = 0.0;
  double conditional = 0.0;
  double gap() const noexcept { return conditional - unconditional; }
};

// PPL(D | U1, U2) and PPL(D); the conditional run scores only the
// transcript's tokens with the profiles as context. A context overflow
// raises MetricError naming the dialogue.
PerplexityPair perplexity_pair(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                               const std::vector<std::string>& user2_personas, backends::Backend& lm);

double perplexity_gap(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                      const std::vector<std::string>& user2_personas, backends::Backend& lm);

// Mean of M(u_1..u_{i-1}, u_i) for i = 2..N. Calls the scorer N-1 times.
double prefix_coherence(const std::vector<dialogue::Utterance>& utterances, backends::Backend& scorer);

enum class GevalDimension { consistency, coherence };
std::string_view to_string(GevalDimension d);

// Score in 1..5 from a judge reply: the last "score: N" (or "rating: N"),
// or a reply that is just the digit. "four" does not parse.
std::optional<int> parse_geval_score(std::string_view reply);

std::string render_geval_prompt(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                                const std::vector<std::string>& user2_personas, GevalDimension dimension,
                                const prompts::TemplateSet& templates);

// Judge score, re-asking up to `retries` times when the reply has no
// parseable score. Empty when every attempt fails.
std::optional<int> g_eval(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                          const std::vector<std::string>& user2_personas, GevalDimension dimension,
                          backends::Backend& judge, const prompts::TemplateSet& templates, int retries = 2);

// ---- aggregation -----------------------------------------------------------

// Table columns in report order.
enum class Metric { c_score, contd, p_gap, geval_consistency, perplexity, qdce, paireval, geval_coherence };
inline constexpr std::array<Metric, 8> kMetrics = {Metric::c_score,    Metric::contd,       Metric::p_gap,
                                                   Metric::geval_consistency, Metric::perplexity, Metric::qdce,
                                                   Metric::paireval,   Metric::geval_coherence};

std::string_view metric_key(Metric m);     // "c_score"
std::string_view metric_header(Metric m);  // "C score"
std::string_view metric_group(Metric m);   // "consistency" | "coherence"
bool higher_is_better(Metric m);
Metric metric_from_key(std::string_view key);

struct DialogueMetrics {
  std::string dialogue_id;
  std::string pair_id;
  std::map<std::string, std::string> keys;  // pairing_type, generator_model, strategy, ordering, level
  std::size_t n_utterances = 0;
  std::size_t n_words = 0;
  std::size_t entail_count = 0;
  std::size_t contradiction_count = 0;
  std::array<std::optional<double>, kMetrics.size()> values{};

  std::optional<double>& at(Metric m) { return values[static_cast<std::size_t>(m)]; }
  const std::optional<double>& at(Metric m) const { return values[static_cast<std::size_t>(m)]; }
};

nlohmann::json to_json(const DialogueMetrics& m);
DialogueMetrics dialogue_metrics_from_json(const nlohmann::json& j);

struct GroupRow {
  std::map<std::string, std::string> keys;
  std::size_t n_dialogues = 0;
  std::array<std::optional<double>, kMetrics.size()> mean{};
  std::array<std::size_t, kMetrics.size()> count{};
  // 100 * sum C# / sum (C# + E#) over the group.
  std::optional<double> pooled_contd;
  double mean_utterances = 0.0;
  double mean_words = 0.0;

  const std::optional<double>& at(Metric m) const { return mean[static_cast<std::size_t>(m)]; }
};

// Per-group arithmetic means over present values; absent values (undefined
// Contd., missing judge scores, unselected metrics) are skipped. Groups with
// no metric values at all are dropped with a warning. Rows come out sorted
// by key tuple.
std::vector<GroupRow> aggregate(const std::vector<DialogueMetrics>& reports, const std::vector<std::string>& group_keys);

}  // namespace polardial::metrics
