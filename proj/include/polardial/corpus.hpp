#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "polardial/persona.hpp"

namespace polardial::corpus {

enum class Format { convai2_text, jsonl };

Format format_from_string(std::string_view name);

struct Corpus {
  std::vector<UserProfile> profiles;
  std::vector<Persona> personas;
};

struct CorpusStats {
  std::size_t n_profiles = 0;
  std::size_t n_unique_personas = 0;
  double mean_profile_words = 0.0;
  double mean_persona_words = 0.0;
  // Level → count over scored personas; levels without personas are absent.
  std::map<int, std::size_t> counts_per_level;
  std::map<int, double> mean_words_per_level;
};

// Lowercase, whitespace collapsed, trailing punctuation stripped.
std::string normalize_persona(std::string_view text);

// First 16 hex digits of the SHA-256 of the normalized text.
std::string persona_id_for(std::string_view text);

// Parses a ConvAI2 raw dump ("your persona:" / "partner's persona:" lines,
// numbered turns restarting at 1 per dialogue) or a JSONL profile list.
Corpus ingest_corpus(const std::filesystem::path& path, Format format);

// In-memory variants used by ingest_corpus and the tests.
Corpus parse_convai2_text(std::string_view text, const std::string& origin = "<memory>");
Corpus parse_profile_jsonl(std::string_view text, const std::string& origin = "<memory>");

CorpusStats corpus_stats(const std::vector<UserProfile>& profiles, const std::vector<Persona>& personas);

// Canonical corpus files: personas.jsonl and profiles.jsonl under dir.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace polardial::corpus
