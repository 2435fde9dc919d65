#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "polardial/backends.hpp"
#include "polardial/persona.hpp"
#include "polardial/polarity.hpp"

namespace polardial::profiles {

struct SynthesisConfig {
  std::size_t k = 5;
  ProfileType profile_type = ProfileType::negative;
  std::size_t n_profiles = 1;
  // Fraction of positive personas in a mixed profile; drawn per profile when unset.
  std::optional<double> mix_ratio;
  std::uint64_t seed = 0;
  // Candidate draws allowed per slot before giving up.
  std::size_t max_attempts = 200;
  double threshold = polarity::kDefaultThreshold;
  std::size_t max_in_flight = 8;

  void validate() const;
};

// Scored personas split by label at a fixed threshold.
class LabeledPool {
 public:
  LabeledPool(const std::vector<Persona>& personas, double threshold);

  const std::vector<const Persona*>& negatives() const noexcept { return negatives_; }
  const std::vector<const Persona*>& positives() const noexcept { return positives_; }
  double threshold() const noexcept { return threshold_; }

 private:
  std::vector<const Persona*> negatives_;
  std::vector<const Persona*> positives_;
  double threshold_;
};

// True when the NLI backend labels either direction of the pair a contradiction.
bool contradicts(backends::Backend& nli, const Persona& a, const Persona& b);

// Admits K personas one at a time; a candidate enters only if it does not
// contradict any persona already admitted.
UserProfile synthesize_profile(const LabeledPool& pool, const SynthesisConfig& cfg, backends::Backend& nli,
                               std::mt19937_64& rng);

// n_profiles pairwise-distinct profiles (as persona-id sets). Each candidate
// profile uses its own RNG stream derived from cfg.seed and its draw index,
// so the batch is identical for any degree of parallelism.
std::vector<UserProfile> synthesize_batch(const LabeledPool& pool, const SynthesisConfig& cfg, backends::Backend& nli);

// Singleton profiles for every scored persona in one polarity level.
std::vector<UserProfile> build_level_pool(const std::vector<Persona>& personas, int level);

// Deterministic 64-bit stream seed for (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace polardial::profiles
