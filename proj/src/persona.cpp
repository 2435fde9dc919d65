#include "polardial/persona.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"

namespace polardial {

PolarityScore::PolarityScore(double s) : s_(s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    std::ostringstream os;
    os << "polarity score " << s << " outside [0, 1]";
    throw ProtocolError(os.str());
  }
}

std::string_view to_string(ProfileType type) {
  switch (type) {
    case ProfileType::original: return "original";
    case ProfileType::negative: return "negative";
    case ProfileType::positive: return "positive";
    case ProfileType::mixed: return "mixed";
    case ProfileType::level: return "level";
  }
  return "?";
}

ProfileType profile_type_from_string(std::string_view name) {
  for (auto t : {ProfileType::original, ProfileType::negative, ProfileType::positive, ProfileType::mixed,
                 ProfileType::level}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown profile type '" + std::string(name) + "'");
}

PersonaIndex::PersonaIndex(std::vector<Persona> personas) : personas_(std::move(personas)) {
  sorted_.reserve(personas_.size());
  for (std::size_t i = 0; i < personas_.size(); ++i) sorted_.emplace_back(personas_[i].persona_id, i);
  std::sort(sorted_.begin(), sorted_.end());
}

const Persona* PersonaIndex::find(const std::string& persona_id) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), persona_id,
                             [](const auto& entry, const std::string& id) { return entry.first < id; });
  if (it == sorted_.end() || it->first != persona_id) return nullptr;
  return &personas_[it->second];
}

const Persona& PersonaIndex::at(const std::string& persona_id) const {
  if (const auto* p = find(persona_id)) return *p;
  throw Error("unknown persona id " + persona_id);
}

std::vector<std::string> PersonaIndex::texts(const UserProfile& profile) const {
  std::vector<std::string> out;
  out.reserve(profile.personas.size());
  for (const auto& id : profile.personas) out.push_back(at(id).text);
  return out;
}

nlohmann::json to_json(const Persona& p) {
  nlohmann::json j{{"persona_id", p.persona_id}, {"text", p.text}, {"source_profile_ids", p.source_profile_ids}};
  if (p.polarity) j["s"] = p.polarity->value();
  return j;
}

Persona persona_from_json(const nlohmann::json& j) {
  Persona p;
  p.persona_id = j.at("persona_id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.source_profile_ids = j.value("source_profile_ids", std::vector<std::string>{});
  if (j.contains("s") && !j["s"].is_null()) p.polarity = PolarityScore(j["s"].get<double>());
  return p;
}

nlohmann::json to_json(const UserProfile& p) {
  nlohmann::json j{{"profile_id", p.profile_id}, {"personas", p.personas}, {"profile_type", to_string(p.profile_type)}};
  if (p.level) j["level"] = *p.level;
  return j;
}

UserProfile profile_from_json(const nlohmann::json& j) {
  UserProfile p;
  p.profile_id = j.at("profile_id").get<std::string>();
  p.personas = j.at("personas").get<std::vector<std::string>>();
  p.profile_type = profile_type_from_string(j.value("profile_type", "original"));
  if (j.contains("level") && !j["level"].is_null()) p.level = j["level"].get<int>();
  return p;
}

std::string profile_set_key(const UserProfile& profile) {
  auto ids = profile.personas;
  std::sort(ids.begin(), ids.end());
  std::string material;
  for (const auto& id : ids) {
    material += id;
    material += '\n';
  }
  return sha256_hex(material).substr(0, 16);
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace polardial
