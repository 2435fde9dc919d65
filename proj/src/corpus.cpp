#include "polardial/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "polardial/digest.hpp"
#include "polardial/error.hpp"
#include "polardial/json_io.hpp"
#include "polardial/polarity.hpp"

namespace polardial::corpus {
namespace {

constexpr std::string_view kYourPersona = "your persona:";
constexpr std::string_view kPartnerPersona = "partner's persona:";

// Accumulates profiles and personas while deduplicating both.
class Builder {
 public:
  explicit Builder(std::string origin) : origin_(std::move(origin)) {}

  void add_profile(const std::vector<std::string>& lines, std::string profile_id = {}) {
    UserProfile profile;
    std::unordered_set<std::string> seen;
    std::vector<std::string> texts;
    for (const auto& line : lines) {
      const std::string text = collapse_whitespace(line);
      if (normalize_persona(text).empty()) continue;
      const std::string id = persona_id_for(text);
      if (!seen.insert(id).second) continue;
      profile.personas.push_back(id);
      texts.push_back(text);
    }
    if (profile.personas.empty()) return;

    const std::string set_key = profile_set_key(profile);
    if (!profile_keys_.insert(set_key).second) return;
    profile.profile_id = profile_id.empty() ? "p" + set_key : std::move(profile_id);
    profile.profile_type = ProfileType::original;

    for (std::size_t i = 0; i < profile.personas.size(); ++i) {
      auto [it, inserted] = persona_slot_.try_emplace(profile.personas[i], personas_.size());
      if (inserted) personas_.push_back(Persona{profile.personas[i], texts[i], {}, std::nullopt});
      personas_[it->second].source_profile_ids.push_back(profile.profile_id);
    }
    profiles_.push_back(std::move(profile));
  }

  Corpus finish() && {
    if (profiles_.empty()) throw EmptyCorpusError("no profiles parsed from " + origin_);
    return Corpus{std::move(profiles_), std::move(personas_)};
  }

 private:
  std::string origin_;
  std::vector<UserProfile> profiles_;
  std::vector<Persona> personas_;
  std::unordered_map<std::string, std::size_t> persona_slot_;
  std::unordered_set<std::string> profile_keys_;
};

bool is_trailing_punct(char c) { return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':'; }

}  // namespace

Format format_from_string(std::string_view name) {
  if (name == "convai2_text") return Format::convai2_text;
  if (name == "jsonl") return Format::jsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) + "'");
}

std::string normalize_persona(std::string_view text) {
  std::string out = collapse_whitespace(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  while (!out.empty() && (is_trailing_punct(out.back()) || out.back() == ' ')) out.pop_back();
  return out;
}

std::string persona_id_for(std::string_view text) { return sha256_hex(normalize_persona(text)).substr(0, 16); }

Corpus parse_convai2_text(std::string_view text, const std::string& origin) {
  Builder builder(origin);
  std::vector<std::string> yours;
  std::vector<std::string> partners;
  auto flush = [&] {
    builder.add_profile(yours);
    builder.add_profile(partners);
    yours.clear();
    partners.clear();
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (eol == text.size()) break;
      continue;
    }

    // Turn numbers restart at 1 for every dialogue.
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits > 0 && line.substr(0, digits) == "1") flush();
    std::string_view body = line.substr(digits);
    while (!body.empty() && body.front() == ' ') body.remove_prefix(1);

    if (body.rfind(kYourPersona, 0) == 0) {
      yours.emplace_back(body.substr(kYourPersona.size()));
    } else if (body.rfind(kPartnerPersona, 0) == 0) {
      partners.emplace_back(body.substr(kPartnerPersona.size()));
    }
    if (eol == text.size()) break;
  }
  flush();
  return std::move(builder).finish();
}

Corpus parse_profile_jsonl(std::string_view text, const std::string& origin) {
  Builder builder(origin);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      builder.add_profile(j.at("personas").get<std::vector<std::string>>(), j.value("profile_id", ""));
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return std::move(builder).finish();
}

Corpus ingest_corpus(const std::filesystem::path& path, Format format) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error&) {
    throw IngestError("cannot read corpus file " + path.string());
  }
  Corpus c = format == Format::convai2_text ? parse_convai2_text(text, path.string())
                                            : parse_profile_jsonl(text, path.string());
  spdlog::info("ingested {}: {} profiles, {} unique personas", path.string(), c.profiles.size(), c.personas.size());
  return c;
}

CorpusStats corpus_stats(const std::vector<UserProfile>& profiles, const std::vector<Persona>& personas) {
  CorpusStats stats;
  stats.n_profiles = profiles.size();
  stats.n_unique_personas = personas.size();

  std::unordered_map<std::string, std::size_t> words;
  std::size_t persona_words = 0;
  std::map<int, std::size_t> level_words;
  for (const auto& p : personas) {
    const std::size_t w = word_count(p.text);
    words.emplace(p.persona_id, w);
    persona_words += w;
    if (p.polarity) {
      const int level = polarity::level_from_score(*p.polarity).level;
      ++stats.counts_per_level[level];
      level_words[level] += w;
    }
  }
  if (!personas.empty()) stats.mean_persona_words = static_cast<double>(persona_words) / personas.size();

  std::size_t profile_words = 0;
  for (const auto& profile : profiles) {
    for (const auto& id : profile.personas) {
      if (auto it = words.find(id); it != words.end()) profile_words += it->second;
    }
  }
  if (!profiles.empty()) stats.mean_profile_words = static_cast<double>(profile_words) / profiles.size();

  for (const auto& [level, count] : stats.counts_per_level) {
    stats.mean_words_per_level[level] = static_cast<double>(level_words[level]) / count;
  }
  return stats;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::vector<nlohmann::json> personas;
  personas.reserve(corpus.personas.size());
  for (const auto& p : corpus.personas) personas.push_back(to_json(p));
  std::vector<nlohmann::json> profiles;
  profiles.reserve(corpus.profiles.size());
  for (const auto& p : corpus.profiles) profiles.push_back(to_json(p));
  write_jsonl(dir / "personas.jsonl", personas);
  write_jsonl(dir / "profiles.jsonl", profiles);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  for (const auto& j : read_jsonl(dir / "personas.jsonl")) c.personas.push_back(persona_from_json(j));
  for (const auto& j : read_jsonl(dir / "profiles.jsonl")) c.profiles.push_back(profile_from_json(j));
  return c;
}

}  // namespace polardial::corpus
