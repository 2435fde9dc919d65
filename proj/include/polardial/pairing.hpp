#pragma once

#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/persona.hpp"

namespace polardial::pairing {

enum class PairingType { original, negative, positive, mixed, opposite, level_k };

std::string_view to_string(PairingType type);
PairingType pairing_type_from_string(std::string_view name);

struct ProfilePair {
  std::string pair_id;
  UserProfile first;   // User 1: listed first in prompts and speaks first
  UserProfile second;  // User 2
  PairingType pairing_type = PairingType::original;
  std::optional<int> level;
};

// Throws PairingError unless the member profile types fit the pairing type
// and the two members differ.
void check_pair(const ProfilePair& pair);

// Samples n distinct profile combinations. Same-type pairings treat a
// combination as an unordered set; opposite pairings take pool_a as the
// negative pool and pool_b as the positive pool, with ceil(n/2) pairs putting
// the negative profile first.
std::vector<ProfilePair> make_pairs(const std::vector<UserProfile>& pool_a, const std::vector<UserProfile>& pool_b,
                                    PairingType type, std::size_t n, std::mt19937_64& rng);

// Pairs of singleton profiles from one polarity level.
std::vector<ProfilePair> make_level_pairs(const std::vector<UserProfile>& level_pool, std::size_t n,
                                          std::mt19937_64& rng);

// Manifest line: {pair_id, pairing_type, first_profile_id, second_profile_id, level?}.
nlohmann::json manifest_entry(const ProfilePair& pair);

}  // namespace polardial::pairing
