#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace polardial::prompts {

// A prompt with {name} placeholders.
class Template {
 public:
  Template() = default;
  explicit Template(std::string text) : text_(std::move(text)) {}

  static Template from_file(const std::filesystem::path& path);

  // Substitutes every {key} in values. Throws Error when the template uses a
  // required key that is missing from values.
  std::string render(const std::map<std::string, std::string>& values) const;
  // Placeholder names (identifier characters between braces) in first-use order.
  std::vector<std::string> placeholders() const;
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

struct TemplateSet {
  Template joint;             // {profile_1} {profile_2}
  Template turn_based;        // {speaker} {profile} {history}
  Template geval_consistency; // {profile_1} {profile_2} {history}
  Template geval_coherence;   // {history}

  static TemplateSet defaults();
  // Any of joint.txt, turn_based.txt, geval_consistency.txt,
  // geval_coherence.txt found in dir overrides the default.
  static TemplateSet load(const std::filesystem::path& dir);
};

// "- persona" per line.
std::string bullet_list(const std::vector<std::string>& personas);

}  // namespace polardial::prompts
