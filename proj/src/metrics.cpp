#include "polardial/metrics.hpp"

#include <algorithm>
#include <regex>

#include <spdlog/spdlog.h>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"
#include "polardial/parallel.hpp"

namespace polardial::metrics {
namespace {

const std::vector<std::string>& personas_of(dialogue::Speaker s, const std::vector<std::string>& u1,
                                            const std::vector<std::string>& u2) {
  return s == dialogue::Speaker::user1 ? u1 : u2;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace

std::int8_t verdict_value(backends::NliLabel label) {
  switch (label) {
    case backends::NliLabel::entailment: return 1;
    case backends::NliLabel::neutral: return 0;
    case backends::NliLabel::contradiction: return -1;
  }
  return 0;
}

int utterance_c(std::string_view utterance, const std::vector<std::string>& personas, backends::Backend& nli) {
  if (personas.empty()) throw MetricError("utterance_c needs a non-empty profile");
  int sum = 0;
  for (const auto& p : personas) {
    try {
      sum += verdict_value(backends::nli(nli, utterance, p).label);
    } catch (const Error& e) {
      throw MetricError(std::string("NLI verdict failed: ") + e.what());
    }
  }
  return sum;
}

VerdictMatrix collect_verdicts(const std::vector<dialogue::Utterance>& utterances,
                               const std::vector<std::string>& user1_personas,
                               const std::vector<std::string>& user2_personas, backends::Backend& nli,
                               std::size_t max_in_flight) {
  if (utterances.empty()) throw MetricError("consistency of an empty dialogue is undefined");
  if (user1_personas.empty() || user2_personas.empty()) throw MetricError("consistency needs non-empty profiles");

  // Flatten (utterance, persona) jobs so verdicts can be fetched concurrently.
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& personas = personas_of(utterances[i].speaker, user1_personas, user2_personas);
    for (std::size_t j = 0; j < personas.size(); ++j) jobs.emplace_back(i, j);
    offsets.push_back(jobs.size());
  }
  std::vector<std::int8_t> values(jobs.size());
  bounded_for(jobs.size(), max_in_flight, [&](std::size_t k) {
    const auto [i, j] = jobs[k];
    const auto& personas = personas_of(utterances[i].speaker, user1_personas, user2_personas);
    try {
      values[k] = verdict_value(backends::nli(nli, utterances[i].text, personas[j]).label);
    } catch (const Error& e) {
      throw MetricError("NLI verdict for utterance " + std::to_string(i + 1) + " failed: " + e.what());
    }
  });

  VerdictMatrix m;
  m.values = std::move(values);
  m.row_offsets = std::move(offsets);
  return m;
}

ConsistencyReport dialogue_c_score(const std::vector<dialogue::Utterance>& utterances,
                                   const std::vector<std::string>& user1_personas,
                                   const std::vector<std::string>& user2_personas, backends::Backend& nli,
                                   std::size_t max_in_flight) {
  return consistency_from_verdicts(collect_verdicts(utterances, user1_personas, user2_personas, nli, max_in_flight));
}

std::optional<double> contradiction_ratio(const std::vector<dialogue::Utterance>& utterances,
                                          const std::vector<std::string>& user1_personas,
                                          const std::vector<std::string>& user2_personas, backends::Backend& nli,
                                          std::size_t max_in_flight) {
  return dialogue_c_score(utterances, user1_personas, user2_personas, nli, max_in_flight).contd;
}

double perplexity(std::string_view text, backends::Backend& lm) {
  if (collapse_whitespace(text).empty()) throw MetricError("perplexity of empty text is undefined");
  std::vector<double> lps;
  try {
    lps = backends::token_logprobs(lm, "", text);
  } catch (const Error& e) {
    throw MetricError(std::string("log-probability request failed: ") + e.what());
  }
  return perplexity_from_logprobs(lps);
}

std::string conditioning_prefix(const std::vector<std::string>& user1_personas,
                                const std::vector<std::string>& user2_personas) {
  return "User 1 persona:\n" + join_lines(user1_personas) + "User 2 persona:\n" + join_lines(user2_personas) + "\n";
}

PerplexityPair perplexity_pair(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                               const std::vector<std::string>& user2_personas, backends::Backend& lm) {
  const std::string text = dialogue::render_transcript(d.utterances);
  if (text.empty()) throw MetricError("dialogue " + d.dialogue_id + " has no utterances");
  try {
    PerplexityPair out;
    out.unconditional = perplexity_from_logprobs(backends::token_logprobs(lm, "", text));
    out.conditional =
        perplexity_from_logprobs(backends::token_logprobs(lm, conditioning_prefix(user1_personas, user2_personas), text));
    return out;
  } catch (const ContextOverflowError& e) {
    throw MetricError("dialogue " + d.dialogue_id + " exceeds the log-probability backend context: " + e.what());
  } catch (const MetricError&) {
    throw;
  } catch (const Error& e) {
    throw MetricError("perplexity of dialogue " + d.dialogue_id + " failed: " + e.what());
  }
}

double perplexity_gap(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                      const std::vector<std::string>& user2_personas, backends::Backend& lm) {
  return perplexity_pair(d, user1_personas, user2_personas, lm).gap();
}

double prefix_coherence(const std::vector<dialogue::Utterance>& utterances, backends::Backend& scorer) {
  const std::size_t n = utterances.size();
  if (n < 2) throw MetricError("prefix coherence needs at least two utterances");
  std::vector<std::string> context;
  context.reserve(n);
  double total = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    context.push_back(utterances[i - 1].text);
    backends::ScorerReply reply;
    try {
      reply = backends::score_response(scorer, context, utterances[i].text);
    } catch (const Error& e) {
      throw MetricError("coherence scorer failed on utterance " + std::to_string(i + 1) + ": " + e.what());
    }
    if (reply.score < reply.lo || reply.score > reply.hi) {
      throw MetricError("coherence score " + std::to_string(reply.score) + " outside the declared scale");
    }
    total += reply.score;
  }
  return total / static_cast<double>(n - 1);
}

std::string_view to_string(GevalDimension d) { return d == GevalDimension::consistency ? "consistency" : "coherence"; }

std::optional<int> parse_geval_score(std::string_view reply) {
  static const std::regex labelled(R"((?:score|rating)\s*\**\s*[:=\-]?\s*\**\s*([1-5])(?![0-9.]))", std::regex::icase);
  static const std::regex bare(R"(^\s*\**\s*([1-5])\s*(?:/\s*5)?\s*\.?\s*\**\s*$)");
  const std::string text(reply);
  std::optional<int> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), labelled); it != std::sregex_iterator(); ++it) {
    found = std::stoi((*it)[1].str());
  }
  if (found) return found;
  std::smatch m;
  if (std::regex_match(text, m, bare)) return std::stoi(m[1].str());
  return std::nullopt;
}

std::string render_geval_prompt(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                                const std::vector<std::string>& user2_personas, GevalDimension dimension,
                                const prompts::TemplateSet& templates) {
  const std::map<std::string, std::string> values{{"profile_1", prompts::bullet_list(user1_personas)},
                                                  {"profile_2", prompts::bullet_list(user2_personas)},
                                                  {"history", dialogue::render_transcript(d.utterances)}};
  const auto& tpl = dimension == GevalDimension::consistency ? templates.geval_consistency : templates.geval_coherence;
  return tpl.render(values);
}

std::optional<int> g_eval(const dialogue::Dialogue& d, const std::vector<std::string>& user1_personas,
                          const std::vector<std::string>& user2_personas, GevalDimension dimension,
                          backends::Backend& judge, const prompts::TemplateSet& templates, int retries) {
  backends::ChatRequest request;
  request.temperature = 0.0;
  request.max_tokens = 1024;
  request.messages.push_back({"user", render_geval_prompt(d, user1_personas, user2_personas, dimension, templates)});
  for (int attempt = 0; attempt <= retries; ++attempt) {
    std::string reply;
    try {
      reply = backends::chat_complete(judge, request);
    } catch (const Error& e) {
      spdlog::warn("G-Eval {} for {} failed: {}", to_string(dimension), d.dialogue_id, e.what());
      return std::nullopt;
    }
    if (auto score = parse_geval_score(reply)) return score;
    request.messages.push_back({"assistant", reply});
    request.messages.push_back(
        {"user", "Your answer did not contain a score. Reply with the final score only, as a single integer from 1 to 5."});
  }
  spdlog::warn("G-Eval {} for {}: no parseable score after {} attempts", to_string(dimension), d.dialogue_id,
               retries + 1);
  return std::nullopt;
}

// ---- aggregation ---------------------------------------------------------------

std::string_view metric_key(Metric m) {
  switch (m) {
    case Metric::c_score: return "c_score";
    case Metric::contd: return "contd";
    case Metric::p_gap: return "p_gap";
    case Metric::geval_consistency: return "geval_consistency";
    case Metric::perplexity: return "perplexity";
    case Metric::qdce: return "qdce";
    case Metric::paireval: return "paireval";
    case Metric::geval_coherence: return "geval_coherence";
  }
  return "?";
}

std::string_view metric_header(Metric m) {
  switch (m) {
    case Metric::c_score: return "C score";
    case Metric::contd: return "Contd.";
    case Metric::p_gap: return "P Gap";
    case Metric::geval_consistency: return "G-eval";
    case Metric::perplexity: return "Perp.";
    case Metric::qdce: return "Q-DCE";
    case Metric::paireval: return "PairEval";
    case Metric::geval_coherence: return "G-eval";
  }
  return "?";
}

std::string_view metric_group(Metric m) {
  switch (m) {
    case Metric::c_score:
    case Metric::contd:
    case Metric::p_gap:
    case Metric::geval_consistency: return "consistency";
    default: return "coherence";
  }
}

bool higher_is_better(Metric m) {
  return !(m == Metric::contd || m == Metric::p_gap || m == Metric::perplexity);
}

Metric metric_from_key(std::string_view key) {
  for (auto m : kMetrics) {
    if (metric_key(m) == key) return m;
  }
  throw ConfigError("unknown metric '" + std::string(key) + "'");
}

nlohmann::json to_json(const DialogueMetrics& m) {
  nlohmann::json j{{"dialogue_id", m.dialogue_id},
                   {"pair_id", m.pair_id},
                   {"keys", m.keys},
                   {"n_utterances", m.n_utterances},
                   {"n_words", m.n_words},
                   {"entail_count", m.entail_count},
                   {"contradiction_count", m.contradiction_count}};
  for (auto metric : kMetrics) {
    const auto& v = m.at(metric);
    j[std::string(metric_key(metric))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

DialogueMetrics dialogue_metrics_from_json(const nlohmann::json& j) {
  DialogueMetrics m;
  m.dialogue_id = j.at("dialogue_id").get<std::string>();
  m.pair_id = j.value("pair_id", "");
  m.keys = j.value("keys", std::map<std::string, std::string>{});
  m.n_utterances = j.value("n_utterances", std::size_t{0});
  m.n_words = j.value("n_words", std::size_t{0});
  m.entail_count = j.value("entail_count", std::size_t{0});
  m.contradiction_count = j.value("contradiction_count", std::size_t{0});
  for (auto metric : kMetrics) {
    const std::string key(metric_key(metric));
    if (j.contains(key) && !j[key].is_null()) m.at(metric) = j[key].get<double>();
  }
  return m;
}

std::vector<GroupRow> aggregate(const std::vector<DialogueMetrics>& reports, const std::vector<std::string>& group_keys) {
  struct Acc {
    GroupRow row;
    std::array<double, kMetrics.size()> sums{};
    std::size_t entail = 0;
    std::size_t contra = 0;
    std::size_t utterances = 0;
    std::size_t words = 0;
  };
  std::map<std::vector<std::string>, Acc> groups;
  for (const auto& r : reports) {
    std::vector<std::string> tuple;
    for (const auto& k : group_keys) {
      auto it = r.keys.find(k);
      tuple.push_back(it == r.keys.end() ? "" : it->second);
    }
    Acc& acc = groups[tuple];
    if (acc.row.n_dialogues == 0) {
      for (std::size_t i = 0; i < group_keys.size(); ++i) acc.row.keys[group_keys[i]] = tuple[i];
    }
    ++acc.row.n_dialogues;
    acc.entail += r.entail_count;
    acc.contra += r.contradiction_count;
    acc.utterances += r.n_utterances;
    acc.words += r.n_words;
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      if (r.values[m]) {
        acc.sums[m] += *r.values[m];
        ++acc.row.count[m];
      }
    }
  }

  std::vector<GroupRow> rows;
  for (auto& [tuple, acc] : groups) {
    bool any = false;
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      if (acc.row.count[m] > 0) {
        acc.row.mean[m] = acc.sums[m] / static_cast<double>(acc.row.count[m]);
        any = true;
      }
    }
    if (!any) {
      spdlog::warn("aggregate: group with {} dialogues has no metric values; row omitted", acc.row.n_dialogues);
      continue;
    }
    if (acc.entail + acc.contra > 0) {
      acc.row.pooled_contd = 100.0 * static_cast<double>(acc.contra) / static_cast<double>(acc.entail + acc.contra);
    }
    acc.row.mean_utterances = static_cast<double>(acc.utterances) / static_cast<double>(acc.row.n_dialogues);
    acc.row.mean_words = static_cast<double>(acc.words) / static_cast<double>(acc.row.n_dialogues);
    rows.push_back(std::move(acc.row));
  }
  return rows;
}

}  // namespace polardial::metrics
