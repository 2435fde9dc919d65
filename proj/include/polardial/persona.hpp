#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace polardial {

// Probability that a persona reads as positive. 0 is strongly negative,
// 1 strongly positive, 0.5 neutral.
class PolarityScore {
 public:
  PolarityScore() = default;
  // Throws ProtocolError when s is outside [0, 1] or NaN.
  explicit PolarityScore(double s);

  double value() const noexcept { return s_; }
  friend auto operator<=>(const PolarityScore&, const PolarityScore&) = default;

 private:
  double s_ = 0.5;
};

struct Persona {
  std::string persona_id;
  std::string text;
  std::vector<std::string> source_profile_ids;
  std::optional<PolarityScore> polarity;
};

enum class ProfileType { original, negative, positive, mixed, level };

std::string_view to_string(ProfileType type);
ProfileType profile_type_from_string(std::string_view name);

struct UserProfile {
  std::string profile_id;
  // Persona ids, in presentation order.
  std::vector<std::string> personas;
  ProfileType profile_type = ProfileType::original;
  // Set for single-level pools only.
  std::optional<int> level;
};

// Id → persona lookup shared by downstream stages.
class PersonaIndex {
 public:
  PersonaIndex() = default;
  explicit PersonaIndex(std::vector<Persona> personas);

  const Persona& at(const std::string& persona_id) const;
  const Persona* find(const std::string& persona_id) const;
  const std::vector<Persona>& all() const noexcept { return personas_; }
  std::size_t size() const noexcept { return personas_.size(); }

  // Persona texts of a profile in profile order.
  std::vector<std::string> texts(const UserProfile& profile) const;

 private:
  std::vector<Persona> personas_;
  std::vector<std::pair<std::string, std::size_t>> sorted_;
};

nlohmann::json to_json(const Persona& p);
Persona persona_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UserProfile& p);
UserProfile profile_from_json(const nlohmann::json& j);

// Digest over the persona id set; equal for profiles holding the same personas
// in any order.
std::string profile_set_key(const UserProfile& profile);

std::size_t word_count(std::string_view text);

}  // namespace polardial
