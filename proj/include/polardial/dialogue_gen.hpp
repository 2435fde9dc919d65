#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "polardial/backends.hpp"
#include "polardial/dialogue.hpp"
#include "polardial/error.hpp"
#include "polardial/pairing.hpp"
#include "polardial/persona.hpp"
#include "polardial/prompts.hpp"

namespace polardial::dialogue {

inline constexpr int kJointMaxTokens = 4096;
inline constexpr int kTurnMaxTokens = 128;

struct OrderingStrategy {
  OrderingKind kind = OrderingKind::none;
  double bias_a = 0.05;  // c_asc only
};

// Turn count → probability.
class TurnDistribution {
 public:
  TurnDistribution() = default;
  // Throws ConfigError unless counts are even and >= 2, probabilities are
  // positive and they sum to 1 within 1e-9.
  explicit TurnDistribution(std::map<int, double> probs);

  // {8: 0.6, 10: 0.4}.
  static TurnDistribution fallback();
  // Empirical distribution of kept joint dialogues; odd lengths are skipped.
  static TurnDistribution estimate(const std::vector<Dialogue>& dialogues);

  const std::map<int, double>& probs() const noexcept { return probs_; }

 private:
  std::map<int, double> probs_;
};

int sample_turn_endpoint(const TurnDistribution& dist, std::mt19937_64& rng);

// Sort key of one persona under a strategy; smaller keys come first.
double ordering_key(double s, const OrderingStrategy& strategy);

// Stable reorder of the profile's personas. Throws OrderingError when a
// persona has no polarity score (kind none returns the profile unchanged).
UserProfile order_profile(const UserProfile& profile, const OrderingStrategy& strategy, const PersonaIndex& personas);

struct GenerationContext {
  const PersonaIndex* personas = nullptr;
  const prompts::TemplateSet* templates = nullptr;
};

std::string render_joint_prompt(const pairing::ProfilePair& pair, const GenerationContext& ctx);

// Prompt for the utterance at position `next_index` (0-based). Only the
// speaker's own personas appear in it.
std::string render_turn_prompt(const UserProfile& speaker_profile, Speaker speaker,
                               const std::vector<Utterance>& history, const GenerationContext& ctx);

// One completion at temperature 0; unparseable output yields rejected_parse.
// Throws GenerationError when the backend fails.
Dialogue generate_joint(const pairing::ProfilePair& pair, backends::Backend& chat, const GenerationContext& ctx);

// Thrown when a turn-based run aborts; carries the transcript so far.
class TurnGenerationError : public GenerationError {
 public:
  TurnGenerationError(Dialogue partial, const std::string& what) : GenerationError(what), partial_(std::move(partial)) {}
  const Dialogue& partial() const noexcept { return partial_; }

 private:
  Dialogue partial_;
};

// Alternating single-speaker calls, user1 first, each seeing only its own
// (reordered) profile and the running history.
Dialogue generate_turn_based(const pairing::ProfilePair& pair, int n_turns, const OrderingStrategy& ordering,
                             backends::Backend& chat, const GenerationContext& ctx);

struct FilterConfig {
  std::vector<std::string> refusal_patterns{"I can't", "I cannot", "as an AI", "I'm sorry, but"};
  double similarity_threshold = 0.95;  // same-speaker character-trigram Jaccard
  int ngram_n = 4;                     // word n-grams inside one utterance
  int max_ngram_repeats = 3;           // an n-gram seen more often than this rejects
};

// Character-trigram Jaccard similarity of lowercased, whitespace-collapsed text.
double trigram_jaccard(std::string_view a, std::string_view b);

// Sets filter_status on a parsed dialogue. Refusal patterns match
// case-sensitively anywhere in an utterance (lowercase persona text such as
// "i cannot swim" is not a refusal). An unparseable completion that matches
// a pattern becomes rejected_refusal; other rejected dialogues keep their
// status.
Dialogue filter_outliers(Dialogue dialogue, const FilterConfig& cfg = {});

}  // namespace polardial::dialogue
