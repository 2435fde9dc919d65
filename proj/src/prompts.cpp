#include "polardial/prompts.hpp"

#include <algorithm>
#include <cctype>

#include "polardial/error.hpp"
#include "polardial/json_io.hpp"
#include "templates_embedded.hpp"

namespace polardial::prompts {
namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls visit(start, end, name) for every {identifier} span.
template <typename Visit>
void scan(const std::string& text, Visit visit) {
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    std::size_t end = pos + 1;
    while (end < text.size() && ident_char(text[end])) ++end;
    if (end < text.size() && text[end] == '}' && end > pos + 1) {
      visit(pos, end + 1, text.substr(pos + 1, end - pos - 1));
      pos = end + 1;
    } else {
      ++pos;
    }
  }
}

}  // namespace

Template Template::from_file(const std::filesystem::path& path) { return Template(read_text(path)); }

std::vector<std::string> Template::placeholders() const {
  std::vector<std::string> names;
  scan(text_, [&](std::size_t, std::size_t, const std::string& name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  });
  return names;
}

std::string Template::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(text_.size() * 2);
  std::size_t copied = 0;
  scan(text_, [&](std::size_t start, std::size_t end, const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw Error("prompt template needs a value for {" + name + "}");
    out.append(text_, copied, start - copied);
    out += it->second;
    copied = end;
  });
  out.append(text_, copied, std::string::npos);
  return out;
}

TemplateSet TemplateSet::defaults() {
  return TemplateSet{Template(embedded::kJoint), Template(embedded::kTurnBased), Template(embedded::kGevalConsistency),
                     Template(embedded::kGevalCoherence)};
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set = defaults();
  auto override_with = [&](Template& slot, const char* name) {
    const auto path = dir / name;
    if (std::filesystem::exists(path)) slot = Template::from_file(path);
  };
  override_with(set.joint, "joint.txt");
  override_with(set.turn_based, "turn_based.txt");
  override_with(set.geval_consistency, "geval_consistency.txt");
  override_with(set.geval_coherence, "geval_coherence.txt");
  return set;
}

std::string bullet_list(const std::vector<std::string>& personas) {
  std::string out;
  for (const auto& p : personas) {
    if (!out.empty()) out += '\n';
    out += "- ";
    out += p;
  }
  return out;
}

}  // namespace polardial::prompts
