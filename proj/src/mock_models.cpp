#include "polardial/mock_models.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polardial/corpus.hpp"
#include "polardial/dialogue_gen.hpp"
#include "polardial/error.hpp"
#include "polardial/polarity.hpp"

namespace polardial::mocks {
namespace {

using backends::json;

// Persona level counts of the ConvAI2 training set, levels 1..9.
constexpr std::array<double, 9> kLevelWeights = {1006, 652, 158, 151, 150, 194, 191, 933, 2691};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string key_of(std::string_view s) { return corpus::normalize_persona(s); }

json chat_reply(std::string content) {
  return json{{"choices", json::array({json{{"message", {{"role", "assistant"}, {"content", std::move(content)}}}}})}};
}

// Bullet lines following a heading line, up to the first blank line.
std::vector<std::string> bullets_after(const std::string& text, std::string_view heading) {
  std::vector<std::string> out;
  auto pos = text.find(heading);
  if (pos == std::string::npos) return out;
  pos = text.find('\n', pos);
  std::istringstream in(pos == std::string::npos ? std::string() : text.substr(pos + 1));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("- ", 0) == 0) {
      out.push_back(line.substr(2));
    } else {
      break;
    }
  }
  return out;
}

std::string strip_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ' || s.back() == '!')) s.pop_back();
  return s;
}

// One utterance weaving in a persona; `turn` selects the phrasing and `pass`
// counts earlier mentions of the same persona by this speaker.
std::string utterance_for(const std::string& persona, std::uint64_t h, int turn, std::size_t pass, bool contradict) {
  const std::string p = strip_period(lower(persona));
  if (contradict) return "honestly it is not true that " + p + ". people get that wrong about me.";
  static const std::array<const char*, 6> openers = {"hi! ", "oh nice. ", "cool, ", "ha, ", "really? ", "well, "};
  static const std::array<const char*, 6> closers = {" what about you?", " how is your week going?",
                                                     " do you like that too?", "", " tell me more about yourself.",
                                                     " what do you do for fun?"};
  static const std::array<const char*, 4> revisits = {"", "like i said, ", "as i mentioned before, ",
                                                      "going back to me, "};
  const auto pick = h + static_cast<std::uint64_t>(turn);
  const std::string lead = pass == 0 ? openers[pick % openers.size()] : revisits[1 + pass % 3];
  return lead + p + "." + closers[(pick / 6 + pass * 2) % closers.size()];
}

std::string joint_dialogue(const std::string& prompt) {
  const auto u1 = bullets_after(prompt, "User 1's profile:");
  const auto u2 = bullets_after(prompt, "User 2's profile:");
  const std::uint64_t h = stable_hash(prompt, 11);
  const double mode = unit_hash(prompt, 12);
  if (mode < 0.03) return "I'm sorry, but I can't write that conversation.";
  if (mode < 0.05) return "Here is a friendly chat where both people talk about their lives and hobbies.";
  const int n = 8 + 2 * static_cast<int>(h % 5);
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    const bool first = i % 2 == 0;
    const auto& profile = first ? u1 : u2;
    std::string text;
    if (profile.empty()) {
      text = "nice to meet you.";
    } else {
      const auto own_turn = static_cast<std::size_t>(i / 2);
      const std::string& persona = profile[own_turn % profile.size()];
      const bool contradict = unit_hash(prompt + persona, 13 + static_cast<std::uint64_t>(i)) < 0.08;
      text = utterance_for(persona, h, i, own_turn / profile.size(), contradict);
    }
    if (mode < 0.08 && i == n - 1) text = "yes yes yes yes yes yes yes yes yes yes yes yes yes yes yes yes";
    out << (first ? "User 1: " : "User 2: ") << text << '\n';
  }
  return out.str();
}

std::string single_turn(const std::string& prompt) {
  const auto own = bullets_after(prompt, "Your profile:");
  // Own previous turns: lines tagged with this speaker in the history.
  std::string speaker = "User 1";
  if (prompt.rfind("You are User 2", 0) == 0) speaker = "User 2";
  std::size_t seen = 0;
  std::size_t total = 0;
  std::istringstream in(prompt);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("User 1: ", 0) == 0 || line.rfind("User 2: ", 0) == 0) {
      ++total;
      if (line.rfind(speaker + ": ", 0) == 0) ++seen;
    }
  }
  const std::uint64_t h = stable_hash(prompt, 21);
  if (unit_hash(prompt, 22) < 0.01) return "As an AI, I cannot pretend to be a person.";
  if (own.empty()) return "nice to meet you.";
  const std::string& persona = own[seen % own.size()];
  // Later turns drift: contradictions grow more likely with the history length.
  const double p_contra = 0.03 + 0.015 * static_cast<double>(total);
  const bool contradict = unit_hash(prompt + persona, 23) < p_contra;
  return utterance_for(persona, h, static_cast<int>(total), seen / own.size(), contradict);
}

std::string judge_reply(const json& messages) {
  const std::string prompt = messages.at(0).at("content").get<std::string>();
  const std::uint64_t h = stable_hash(prompt, 31);
  std::size_t contradictions = 0;
  for (std::size_t pos = prompt.find("not true that"); pos != std::string::npos;
       pos = prompt.find("not true that", pos + 1)) {
    ++contradictions;
  }
  int score = 5 - static_cast<int>(std::min<std::size_t>(contradictions, 3)) - static_cast<int>(h % 2);
  score = std::clamp(score, 1, 5);
  if (messages.size() > 1) return std::to_string(score);
  if (unit_hash(prompt, 32) < 0.05) return "Overall I would rate this dialogue a four out of five.";
  std::ostringstream out;
  out << "The dialogue contains " << contradictions << " statement(s) that conflict with the profiles.\n"
      << "Final score: " << score;
  return out.str();
}

}  // namespace

std::uint64_t stable_hash(std::string_view text, std::uint64_t salt) {
  std::uint64_t h = 1469598103934665603ULL ^ (salt * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // Final avalanche so nearby inputs spread over the whole range.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

double unit_hash(std::string_view text, std::uint64_t salt) {
  return static_cast<double>(stable_hash(text, salt) >> 11) * 0x1.0p-53;
}

backends::MockBackend::Generator classifier() {
  return [](const json& request) {
    const std::string text = request.at("text").get<std::string>();
    double total = 0.0;
    for (double w : kLevelWeights) total += w;
    double u = unit_hash(key_of(text), 1) * total;
    int level = 0;
    while (level < 8 && u >= kLevelWeights[static_cast<std::size_t>(level)]) {
      u -= kLevelWeights[static_cast<std::size_t>(level)];
      ++level;
    }
    const auto bounds = polarity::level_bounds(level + 1);
    const double v = unit_hash(key_of(text), 2);
    // Stay strictly inside the bin so the round trip through 1 - confidence
    // cannot move a score across an edge.
    const double width = bounds.hi - bounds.lo;
    const double s = bounds.lo + width * (0.001 + 0.998 * v);
    return s >= 0.5 ? json{{"label", "positive"}, {"confidence", s}}
                    : json{{"label", "negative"}, {"confidence", 1.0 - s}};
  };
}

backends::MockBackend::Generator nli() {
  return [](const json& request) {
    const std::string premise = lower(request.at("premise").get<std::string>());
    const std::string hyp = strip_period(key_of(request.at("hypothesis").get<std::string>()));
    std::string label = "neutral";
    if (!hyp.empty() && premise.find("not true that " + hyp) != std::string::npos) {
      label = "contradiction";
    } else if (!hyp.empty() && premise.find(hyp) != std::string::npos) {
      label = "entailment";
    } else {
      const std::string a = key_of(request.at("premise").get<std::string>());
      const std::string& lo = std::min(a, hyp);
      const std::string& hi = std::max(a, hyp);
      const double u = unit_hash(lo + "\n" + hi, 3);
      if (u < 0.06) {
        label = "contradiction";
      } else if (u < 0.16) {
        label = "entailment";
      }
    }
    return json{{"label", label}};
  };
}

backends::MockBackend::Generator chat() {
  return [](const json& request) {
    const json& messages = request.at("messages");
    const std::string prompt = messages.at(0).at("content").get<std::string>();
    if (prompt.find("Final score:") != std::string::npos) return chat_reply(judge_reply(messages));
    const int max_tokens = request.value("max_tokens", 256);
    if (max_tokens > dialogue::kTurnMaxTokens) return chat_reply(joint_dialogue(prompt));
    return chat_reply(single_turn(prompt));
  };
}

backends::MockBackend::Generator logprob() {
  return [](const json& request) {
    const std::string context = request.at("context").get<std::string>();
    const std::string continuation = request.at("continuation").get<std::string>();
    const auto ctx_words = words(context);
    const std::set<std::string> seen_ctx(ctx_words.begin(), ctx_words.end());
    std::set<std::string> seen;
    json lps = json::array();
    for (const auto& w : words(continuation)) {
      const double jitter = unit_hash(w, 4);
      double lp = -3.0 - 2.0 * jitter;
      if (seen_ctx.count(w) != 0) {
        lp = -0.8 - 0.4 * jitter;
      } else if (seen.count(w) != 0) {
        lp = -1.5 - 0.5 * jitter;
      }
      seen.insert(w);
      lps.push_back(lp);
    }
    if (lps.empty()) lps.push_back(-10.0);
    return json{{"token_logprobs", lps}};
  };
}

backends::MockBackend::Generator scorer(const std::string& model_id) {
  // Each scorer model gets its own noise stream and overlap weight.
  const std::uint64_t salt = stable_hash(model_id, 4);
  const double weight = 0.4 + 0.2 * unit_hash(model_id, 6);
  return [salt, weight](const json& request) {
    const auto& context = request.at("context");
    const std::string response = request.at("response").get<std::string>();
    const auto rw = words(response);
    double overlap = 0.0;
    if (!context.empty() && !rw.empty()) {
      const auto lw = words(context.back().get<std::string>());
      const std::set<std::string> last(lw.begin(), lw.end());
      std::size_t hits = 0;
      for (const auto& w : rw) hits += last.count(w);
      overlap = static_cast<double>(hits) / static_cast<double>(rw.size());
    }
    const double score = std::clamp(0.35 + weight * overlap + 0.15 * unit_hash(response, salt), 0.0, 1.0);
    return json{{"score", score}, {"scale", {0.0, 1.0}}};
  };
}

std::shared_ptr<backends::MockBackend> make(const backends::BackendSpec& spec) {
  using backends::Capability;
  switch (spec.capability) {
    case Capability::classify: return std::make_shared<backends::MockBackend>(spec, classifier());
    case Capability::nli: return std::make_shared<backends::MockBackend>(spec, nli());
    case Capability::chat: return std::make_shared<backends::MockBackend>(spec, chat());
    case Capability::logprob: return std::make_shared<backends::MockBackend>(spec, logprob());
    case Capability::scorer: return std::make_shared<backends::MockBackend>(spec, scorer(spec.model_id));
  }
  throw ConfigError("no mock for backend " + spec.model_id);
}

}  // namespace polardial::mocks
