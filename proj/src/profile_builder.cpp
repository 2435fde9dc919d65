#include "polardial/profile_builder.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "polardial/error.hpp"
#include "polardial/parallel.hpp"

namespace polardial::profiles {
namespace {

using polarity::Label;

std::vector<Label> slot_plan(const SynthesisConfig& cfg, std::mt19937_64& rng) {
  switch (cfg.profile_type) {
    case ProfileType::negative: return std::vector<Label>(cfg.k, Label::negative);
    case ProfileType::positive: return std::vector<Label>(cfg.k, Label::positive);
    case ProfileType::mixed: break;
    default: throw ConfigError("profiles of type " + std::string(to_string(cfg.profile_type)) + " are not synthesized");
  }

  std::size_t n_pos = 0;
  if (cfg.mix_ratio) {
    n_pos = static_cast<std::size_t>(std::lround(*cfg.mix_ratio * static_cast<double>(cfg.k)));
    if (cfg.k >= 2 && *cfg.mix_ratio > 0.0 && *cfg.mix_ratio < 1.0) n_pos = std::clamp<std::size_t>(n_pos, 1, cfg.k - 1);
  } else if (cfg.k >= 2) {
    n_pos = std::uniform_int_distribution<std::size_t>(1, cfg.k - 1)(rng);
  } else {
    n_pos = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
  }
  std::vector<Label> plan(cfg.k, Label::negative);
  std::fill_n(plan.begin(), n_pos, Label::positive);
  std::shuffle(plan.begin(), plan.end(), rng);
  return plan;
}

}  // namespace

void SynthesisConfig::validate() const {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (n_profiles < 1) throw ConfigError("n_profiles must be >= 1");
  if (mix_ratio && !(*mix_ratio >= 0.0 && *mix_ratio <= 1.0)) throw ConfigError("mix_ratio must lie in [0, 1]");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (!(threshold > 0.5 && threshold < 1.0)) throw ConfigError("threshold must lie in (0.5, 1)");
}

LabeledPool::LabeledPool(const std::vector<Persona>& personas, double threshold) : threshold_(threshold) {
  for (const auto& p : personas) {
    if (!p.polarity) continue;
    switch (polarity::label_from_score(*p.polarity, threshold)) {
      case Label::negative: negatives_.push_back(&p); break;
      case Label::positive: positives_.push_back(&p); break;
      case Label::neutral: break;
    }
  }
}

bool contradicts(backends::Backend& nli, const Persona& a, const Persona& b) {
  using backends::NliLabel;
  if (backends::nli(nli, a.text, b.text).label == NliLabel::contradiction) return true;
  return backends::nli(nli, b.text, a.text).label == NliLabel::contradiction;
}

UserProfile synthesize_profile(const LabeledPool& pool, const SynthesisConfig& cfg, backends::Backend& nli,
                               std::mt19937_64& rng) {
  cfg.validate();
  const auto plan = slot_plan(cfg, rng);

  std::vector<const Persona*> admitted;
  std::unordered_set<const Persona*> admitted_set;
  for (const Label label : plan) {
    const auto& candidates = label == Label::positive ? pool.positives() : pool.negatives();
    std::size_t already = 0;
    for (const auto* p : admitted) {
      if (polarity::label_from_score(*p->polarity, pool.threshold()) == label) ++already;
    }

    std::unordered_set<std::size_t> rejected;
    std::size_t attempts = 0;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.empty() ? 0 : candidates.size() - 1);
    for (;;) {
      if (rejected.size() + already >= candidates.size()) {
        throw SynthesisError(admitted.size(), "persona pool exhausted after admitting " +
                                                  std::to_string(admitted.size()) + " of " + std::to_string(cfg.k) +
                                                  " " + std::string(polarity::to_string(label)) + " personas");
      }
      if (attempts >= cfg.max_attempts) {
        throw SynthesisError(admitted.size(), "max_attempts exceeded after admitting " +
                                                  std::to_string(admitted.size()) + " of " + std::to_string(cfg.k));
      }
      const std::size_t idx = pick(rng);
      const Persona* candidate = candidates[idx];
      if (admitted_set.contains(candidate) || rejected.contains(idx)) continue;
      ++attempts;
      const bool conflict = std::any_of(admitted.begin(), admitted.end(),
                                        [&](const Persona* existing) { return contradicts(nli, *existing, *candidate); });
      if (conflict) {
        rejected.insert(idx);
        continue;
      }
      admitted.push_back(candidate);
      admitted_set.insert(candidate);
      break;
    }
  }

  UserProfile profile;
  profile.profile_type = cfg.profile_type;
  for (const auto* p : admitted) profile.personas.push_back(p->persona_id);
  profile.profile_id = std::string(to_string(cfg.profile_type)) + "-" + profile_set_key(profile);
  return profile;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the combined words.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<UserProfile> synthesize_batch(const LabeledPool& pool, const SynthesisConfig& cfg, backends::Backend& nli) {
  cfg.validate();
  const std::size_t budget = cfg.n_profiles * 10;
  std::vector<UserProfile> out;
  out.reserve(cfg.n_profiles);
  std::unordered_set<std::string> seen;
  std::size_t drawn = 0;
  std::size_t failures = 0;

  while (out.size() < cfg.n_profiles) {
    const std::size_t round = std::min(cfg.n_profiles - out.size(), budget - drawn);
    if (round == 0) {
      throw SynthesisError(out.size(), "batch of " + std::to_string(cfg.n_profiles) + " " +
                                           std::string(to_string(cfg.profile_type)) + " profiles needs more than " +
                                           std::to_string(budget) + " draws (" + std::to_string(out.size()) +
                                           " distinct, " + std::to_string(failures) + " failed)");
    }
    std::vector<std::optional<UserProfile>> results(round);
    bounded_for(round, cfg.max_in_flight, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(cfg.seed, drawn + i));
      try {
        results[i] = synthesize_profile(pool, cfg, nli, rng);
      } catch (const SynthesisError&) {
        // Counted below; the draw budget bounds retries.
      }
    });
    drawn += round;
    for (auto& r : results) {
      if (!r) {
        ++failures;
        continue;
      }
      if (out.size() < cfg.n_profiles && seen.insert(profile_set_key(*r)).second) out.push_back(std::move(*r));
    }
  }
  spdlog::info("synthesized {} {} profiles (K={}) from {} draws", out.size(), to_string(cfg.profile_type), cfg.k,
               drawn);
  return out;
}

std::vector<UserProfile> build_level_pool(const std::vector<Persona>& personas, int level) {
  polarity::level_bounds(level);
  std::vector<UserProfile> pool;
  for (const auto& p : personas) {
    if (!p.polarity || polarity::level_from_score(*p.polarity).level != level) continue;
    UserProfile profile;
    profile.personas = {p.persona_id};
    profile.profile_type = ProfileType::level;
    profile.level = level;
    profile.profile_id = "level" + std::to_string(level) + "-" + p.persona_id;
    pool.push_back(std::move(profile));
  }
  return pool;
}

}  // namespace polardial::profiles
