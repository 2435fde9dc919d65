#include "polardial/dialogue.hpp"

#include <regex>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"

namespace polardial::dialogue {

std::string_view to_string(Speaker s) { return s == Speaker::user1 ? "user1" : "user2"; }

std::string_view to_string(Strategy s) { return s == Strategy::joint ? "joint" : "turn_based"; }

std::string_view to_string(OrderingKind k) {
  switch (k) {
    case OrderingKind::none: return "none";
    case OrderingKind::asc: return "asc";
    case OrderingKind::dsc: return "dsc";
    case OrderingKind::c_asc: return "c_asc";
  }
  return "?";
}

std::string_view to_string(FilterStatus f) {
  switch (f) {
    case FilterStatus::kept: return "kept";
    case FilterStatus::rejected_refusal: return "rejected_refusal";
    case FilterStatus::rejected_repetition: return "rejected_repetition";
    case FilterStatus::rejected_parse: return "rejected_parse";
    case FilterStatus::rejected_error: return "rejected_error";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "joint") return Strategy::joint;
  if (name == "turn_based") return Strategy::turn_based;
  throw ConfigError("unknown generation strategy '" + std::string(name) + "'");
}

OrderingKind ordering_from_string(std::string_view name) {
  for (auto k : {OrderingKind::none, OrderingKind::asc, OrderingKind::dsc, OrderingKind::c_asc}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown ordering '" + std::string(name) + "'");
}

FilterStatus filter_status_from_string(std::string_view name) {
  for (auto f : {FilterStatus::kept, FilterStatus::rejected_refusal, FilterStatus::rejected_repetition,
                 FilterStatus::rejected_parse, FilterStatus::rejected_error}) {
    if (to_string(f) == name) return f;
  }
  throw Error("unknown filter status '" + std::string(name) + "'");
}

std::string speaker_name(Speaker s) { return s == Speaker::user1 ? "User 1" : "User 2"; }

std::optional<std::vector<Utterance>> parse_transcript(std::string_view text) {
  static const std::regex tag(R"(^[\s>#*_\-]*user\s*([12])\s*[*_]*\s*:\s*[*_]*\s*(.*)$)", std::regex::icase);

  std::vector<Utterance> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string line(text.substr(pos, eol - pos));
    pos = eol + 1;

    std::smatch m;
    if (std::regex_match(line, m, tag)) {
      const Speaker speaker = m[1].str() == "1" ? Speaker::user1 : Speaker::user2;
      std::string body = collapse_whitespace(m[2].str());
      while (!body.empty() && (body.back() == '*' || body.back() == '_')) body.pop_back();
      if (!out.empty() && out.back().speaker == speaker) {
        if (!body.empty()) out.back().text += (out.back().text.empty() ? "" : " ") + body;
      } else {
        out.push_back(Utterance{static_cast<int>(out.size()) + 1, speaker, body});
      }
    } else if (!out.empty()) {
      const std::string body = collapse_whitespace(line);
      if (!body.empty()) out.back().text += (out.back().text.empty() ? "" : " ") + body;
    }
  }
  if (out.empty() || !well_formed(out)) return std::nullopt;
  return out;
}

std::string render_transcript(const std::vector<Utterance>& utterances) {
  std::string out;
  for (const auto& u : utterances) {
    if (!out.empty()) out += '\n';
    out += speaker_name(u.speaker);
    out += ": ";
    out += u.text;
  }
  return out;
}

bool well_formed(const std::vector<Utterance>& utterances) {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    const Speaker expected = i % 2 == 0 ? Speaker::user1 : Speaker::user2;
    if (u.speaker != expected || u.index != static_cast<int>(i) + 1 || u.text.empty()) return false;
  }
  return true;
}

nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json utterances = nlohmann::json::array();
  for (const auto& u : d.utterances) {
    utterances.push_back({{"index", u.index}, {"speaker", to_string(u.speaker)}, {"text", u.text}});
  }
  nlohmann::json j{{"dialogue_id", d.dialogue_id},
                   {"pair_id", d.pair_id},
                   {"pairing_type", pairing::to_string(d.pairing_type)},
                   {"utterances", std::move(utterances)},
                   {"strategy", to_string(d.strategy)},
                   {"ordering", to_string(d.ordering)},
                   {"generator_model", d.generator_model},
                   {"filter_status", to_string(d.filter_status)}};
  if (d.level) j["level"] = *d.level;
  if (d.target_turns) j["target_turns"] = *d.target_turns;
  if (!d.raw.empty()) j["raw"] = d.raw;
  return j;
}

Dialogue dialogue_from_json(const nlohmann::json& j) {
  Dialogue d;
  d.dialogue_id = j.at("dialogue_id").get<std::string>();
  d.pair_id = j.at("pair_id").get<std::string>();
  d.pairing_type = pairing::pairing_type_from_string(j.at("pairing_type").get<std::string>());
  for (const auto& u : j.at("utterances")) {
    d.utterances.push_back(Utterance{u.at("index").get<int>(),
                                     u.at("speaker").get<std::string>() == "user1" ? Speaker::user1 : Speaker::user2,
                                     u.at("text").get<std::string>()});
  }
  d.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  d.ordering = ordering_from_string(j.at("ordering").get<std::string>());
  d.generator_model = j.at("generator_model").get<std::string>();
  d.filter_status = filter_status_from_string(j.at("filter_status").get<std::string>());
  if (j.contains("level")) d.level = j["level"].get<int>();
  if (j.contains("target_turns")) d.target_turns = j["target_turns"].get<int>();
  d.raw = j.value("raw", "");
  return d;
}

std::string make_dialogue_id(const std::string& pair_id, const std::string& model, Strategy strategy,
                             OrderingKind ordering) {
  return pair_id + "/" + model + "/" + std::string(to_string(strategy)) + "/" + std::string(to_string(ordering));
}

}  // namespace polardial::dialogue
