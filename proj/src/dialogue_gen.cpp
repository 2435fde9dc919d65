#include "polardial/dialogue_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>
#include <unordered_map>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"

namespace polardial::dialogue {
namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::set<std::string> trigrams(std::string_view text) {
  const std::string norm = lowercase(collapse_whitespace(text));
  std::set<std::string> grams;
  if (norm.size() < 3) {
    if (!norm.empty()) grams.insert(norm);
    return grams;
  }
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) grams.insert(norm.substr(i, 3));
  return grams;
}

bool has_internal_repeat(std::string_view text, const FilterConfig& cfg) {
  std::vector<std::string> words;
  std::string current;
  for (char c : lowercase(text)) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      current.push_back(c);
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  const auto n = static_cast<std::size_t>(cfg.ngram_n);
  if (n == 0 || words.size() < n) return false;
  std::unordered_map<std::string, int> counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) key += words[i + k] + ' ';
    if (++counts[key] > cfg.max_ngram_repeats) return true;
  }
  return false;
}

std::string history_block(const std::vector<Utterance>& history) {
  if (history.empty()) return "(The conversation has not started yet. You speak first.)";
  return render_transcript(history);
}

// Drops a leading speaker tag a model may echo back.
std::string clean_turn_reply(std::string_view reply) {
  static const std::regex tag(R"(^[\s*_]*user\s*[12]\s*[*_]*\s*:\s*[*_]*\s*)", std::regex::icase);
  std::string text = collapse_whitespace(reply);
  return std::regex_replace(text, tag, "", std::regex_constants::format_first_only);
}

}  // namespace

TurnDistribution::TurnDistribution(std::map<int, double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ConfigError("turn distribution is empty");
  double total = 0.0;
  for (const auto& [turns, p] : probs_) {
    if (turns < 2 || turns % 2 != 0) throw ConfigError("turn counts must be even and >= 2, got " + std::to_string(turns));
    if (!(p > 0.0)) throw ConfigError("turn probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("turn probabilities sum to " + std::to_string(total));
}

TurnDistribution TurnDistribution::fallback() { return TurnDistribution({{8, 0.6}, {10, 0.4}}); }

TurnDistribution TurnDistribution::estimate(const std::vector<Dialogue>& dialogues) {
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& d : dialogues) {
    if (d.strategy != Strategy::joint || d.filter_status != FilterStatus::kept) continue;
    const auto n = static_cast<int>(d.utterances.size());
    if (n < 2 || n % 2 != 0) continue;
    ++counts[n];
    ++total;
  }
  if (total == 0) throw ConfigError("no kept even-length joint dialogues to estimate a turn distribution from");
  std::map<int, double> probs;
  for (const auto& [n, c] : counts) probs[n] = static_cast<double>(c) / static_cast<double>(total);
  // Absorb rounding so the sum check holds exactly.
  double rest = 1.0;
  for (auto it = probs.begin(); std::next(it) != probs.end(); ++it) rest -= it->second;
  probs.rbegin()->second = rest;
  return TurnDistribution(std::move(probs));
}

int sample_turn_endpoint(const TurnDistribution& dist, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (const auto& [turns, p] : dist.probs()) {
    cumulative += p;
    if (u < cumulative) return turns;
  }
  return dist.probs().rbegin()->first;
}

double ordering_key(double s, const OrderingStrategy& strategy) {
  switch (strategy.kind) {
    case OrderingKind::none: return 0.0;
    case OrderingKind::asc: return s;
    case OrderingKind::dsc: return -s;
    case OrderingKind::c_asc: return std::abs(s - 0.5) + (s > 0.5 ? strategy.bias_a : 0.0);
  }
  return 0.0;
}

UserProfile order_profile(const UserProfile& profile, const OrderingStrategy& strategy, const PersonaIndex& personas) {
  if (strategy.kind == OrderingKind::none) return profile;
  if (strategy.bias_a < 0.0) throw OrderingError("bias_a must be >= 0");
  std::vector<std::pair<double, std::string>> keyed;
  keyed.reserve(profile.personas.size());
  for (const auto& id : profile.personas) {
    const auto* p = personas.find(id);
    if (p == nullptr || !p->polarity) throw OrderingError("persona " + id + " has no polarity score");
    keyed.emplace_back(ordering_key(p->polarity->value(), strategy), id);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  UserProfile out = profile;
  for (std::size_t i = 0; i < keyed.size(); ++i) out.personas[i] = keyed[i].second;
  return out;
}

std::string render_joint_prompt(const pairing::ProfilePair& pair, const GenerationContext& ctx) {
  return ctx.templates->joint.render({{"profile_1", prompts::bullet_list(ctx.personas->texts(pair.first))},
                                      {"profile_2", prompts::bullet_list(ctx.personas->texts(pair.second))}});
}

std::string render_turn_prompt(const UserProfile& speaker_profile, Speaker speaker,
                               const std::vector<Utterance>& history, const GenerationContext& ctx) {
  return ctx.templates->turn_based.render({{"speaker", speaker_name(speaker)},
                                           {"profile", prompts::bullet_list(ctx.personas->texts(speaker_profile))},
                                           {"history", history_block(history)}});
}

namespace {

Dialogue skeleton(const pairing::ProfilePair& pair, const backends::Backend& chat, Strategy strategy,
                  OrderingKind ordering) {
  Dialogue d;
  d.pair_id = pair.pair_id;
  d.pairing_type = pair.pairing_type;
  d.level = pair.level;
  d.strategy = strategy;
  d.ordering = ordering;
  d.generator_model = chat.spec().model_id;
  d.dialogue_id = make_dialogue_id(pair.pair_id, d.generator_model, strategy, ordering);
  return d;
}

}  // namespace

Dialogue generate_joint(const pairing::ProfilePair& pair, backends::Backend& chat, const GenerationContext& ctx) {
  Dialogue d = skeleton(pair, chat, Strategy::joint, OrderingKind::none);
  backends::ChatRequest request;
  request.messages.push_back({"user", render_joint_prompt(pair, ctx)});
  request.temperature = 0.0;
  request.max_tokens = kJointMaxTokens;
  try {
    d.raw = backends::chat_complete(chat, request);
  } catch (const Error& e) {
    throw GenerationError("joint generation for " + pair.pair_id + " failed: " + e.what());
  }
  if (auto parsed = parse_transcript(d.raw); parsed && parsed->size() >= 2) {
    d.utterances = std::move(*parsed);
    d.raw.clear();
    d.filter_status = FilterStatus::kept;
  } else {
    d.filter_status = FilterStatus::rejected_parse;
  }
  return d;
}

Dialogue generate_turn_based(const pairing::ProfilePair& pair, int n_turns, const OrderingStrategy& ordering,
                             backends::Backend& chat, const GenerationContext& ctx) {
  if (n_turns < 2) throw GenerationError("turn-based generation needs at least 2 turns");
  Dialogue d = skeleton(pair, chat, Strategy::turn_based, ordering.kind);
  d.target_turns = n_turns;
  const UserProfile first = order_profile(pair.first, ordering, *ctx.personas);
  const UserProfile second = order_profile(pair.second, ordering, *ctx.personas);

  for (int i = 0; i < n_turns; ++i) {
    const Speaker speaker = i % 2 == 0 ? Speaker::user1 : Speaker::user2;
    backends::ChatRequest request;
    request.messages.push_back(
        {"user", render_turn_prompt(speaker == Speaker::user1 ? first : second, speaker, d.utterances, ctx)});
    request.temperature = 0.0;
    request.max_tokens = kTurnMaxTokens;
    std::string reply;
    try {
      reply = backends::chat_complete(chat, request);
    } catch (const Error& e) {
      d.filter_status = FilterStatus::rejected_error;
      d.raw = e.what();
      throw TurnGenerationError(d, "turn " + std::to_string(i + 1) + " of " + pair.pair_id + " failed: " + e.what());
    }
    std::string text = clean_turn_reply(reply);
    if (text.empty()) {
      d.filter_status = FilterStatus::rejected_parse;
      d.raw = reply;
      return d;
    }
    d.utterances.push_back(Utterance{i + 1, speaker, std::move(text)});
  }
  d.filter_status = FilterStatus::kept;
  return d;
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto ga = trigrams(a);
  const auto gb = trigrams(b);
  if (ga.empty() && gb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& g : ga) common += gb.count(g);
  const std::size_t unite = ga.size() + gb.size() - common;
  return static_cast<double>(common) / static_cast<double>(unite);
}

Dialogue filter_outliers(Dialogue dialogue, const FilterConfig& cfg) {
  auto refuses = [&](const std::string& text) {
    return std::any_of(cfg.refusal_patterns.begin(), cfg.refusal_patterns.end(), [&](const std::string& pattern) {
      return !pattern.empty() && text.find(pattern) != std::string::npos;
    });
  };
  // An untagged joint completion is usually a refusal in prose.
  if (dialogue.filter_status == FilterStatus::rejected_parse && refuses(dialogue.raw)) {
    dialogue.filter_status = FilterStatus::rejected_refusal;
  }
  if (dialogue.filter_status != FilterStatus::kept) return dialogue;

  for (const auto& u : dialogue.utterances) {
    if (refuses(u.text)) {
      dialogue.filter_status = FilterStatus::rejected_refusal;
      return dialogue;
    }
  }

  const auto& us = dialogue.utterances;
  for (std::size_t i = 0; i < us.size(); ++i) {
    if (has_internal_repeat(us[i].text, cfg)) {
      dialogue.filter_status = FilterStatus::rejected_repetition;
      return dialogue;
    }
    for (std::size_t j = i + 1; j < us.size(); ++j) {
      if (us[i].speaker == us[j].speaker && trigram_jaccard(us[i].text, us[j].text) >= cfg.similarity_threshold) {
        dialogue.filter_status = FilterStatus::rejected_repetition;
        return dialogue;
      }
    }
  }
  return dialogue;
}

}  // namespace polardial::dialogue
