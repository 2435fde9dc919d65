#include "polardial/pairing.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "polardial/error.hpp"

namespace polardial::pairing {
namespace {

std::optional<ProfileType> member_type(PairingType type) {
  switch (type) {
    case PairingType::original: return ProfileType::original;
    case PairingType::negative: return ProfileType::negative;
    case PairingType::positive: return ProfileType::positive;
    case PairingType::mixed: return ProfileType::mixed;
    case PairingType::level_k: return ProfileType::level;
    case PairingType::opposite: return std::nullopt;
  }
  return std::nullopt;
}

std::string make_pair_id(PairingType type, std::optional<int> level, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  std::string prefix = type == PairingType::level_k ? "level" + std::to_string(level.value_or(0))
                                                    : std::string(to_string(type));
  return prefix + "-" + buf;
}

// Draws n distinct (i, j) index combinations, i from [0, na), j from [0, nb),
// skipping combinations for which skip(i, j) holds. key(i, j) identifies a
// combination for the distinctness check.
template <typename Skip, typename Key>
std::vector<std::pair<std::size_t, std::size_t>> sample_combinations(std::size_t na, std::size_t nb, std::size_t n,
                                                                     std::size_t available, std::mt19937_64& rng,
                                                                     Skip skip, Key key) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n);
  if (n * 2 > available) {
    // Dense request: enumerate, shuffle, take a prefix.
    std::vector<std::pair<std::size_t, std::size_t>> all;
    std::set<std::pair<std::size_t, std::size_t>> keys;
    for (std::size_t i = 0; i < na; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        if (!skip(i, j) && keys.insert(key(i, j)).second) all.emplace_back(i, j);
      }
    }
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(n);
    return all;
  }
  std::uniform_int_distribution<std::size_t> da(0, na - 1);
  std::uniform_int_distribution<std::size_t> db(0, nb - 1);
  std::set<std::pair<std::size_t, std::size_t>> keys;
  while (out.size() < n) {
    const std::size_t i = da(rng);
    const std::size_t j = db(rng);
    if (skip(i, j) || !keys.insert(key(i, j)).second) continue;
    out.emplace_back(i, j);
  }
  return out;
}

}  // namespace

std::string_view to_string(PairingType type) {
  switch (type) {
    case PairingType::original: return "original";
    case PairingType::negative: return "negative";
    case PairingType::positive: return "positive";
    case PairingType::mixed: return "mixed";
    case PairingType::opposite: return "opposite";
    case PairingType::level_k: return "level_k";
  }
  return "?";
}

PairingType pairing_type_from_string(std::string_view name) {
  for (auto t : {PairingType::original, PairingType::negative, PairingType::positive, PairingType::mixed,
                 PairingType::opposite, PairingType::level_k}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown pairing type '" + std::string(name) + "'");
}

void check_pair(const ProfilePair& pair) {
  if (pair.first.profile_id == pair.second.profile_id) throw PairingError("pair " + pair.pair_id + " pairs a profile with itself");
  if (pair.pairing_type == PairingType::opposite) {
    const auto a = pair.first.profile_type;
    const auto b = pair.second.profile_type;
    const bool ok = (a == ProfileType::negative && b == ProfileType::positive) ||
                    (a == ProfileType::positive && b == ProfileType::negative);
    if (!ok) throw PairingError("opposite pair " + pair.pair_id + " needs one negative and one positive profile");
    return;
  }
  const auto want = *member_type(pair.pairing_type);
  if (pair.first.profile_type != want || pair.second.profile_type != want) {
    throw PairingError(std::string(to_string(pair.pairing_type)) + " pair " + pair.pair_id + " holds " +
                       std::string(to_string(pair.first.profile_type)) + "/" +
                       std::string(to_string(pair.second.profile_type)) + " profiles");
  }
  if (pair.pairing_type == PairingType::level_k) {
    if (!pair.level || pair.first.level != pair.level || pair.second.level != pair.level) {
      throw PairingError("level pair " + pair.pair_id + " mixes levels");
    }
  }
}

std::vector<ProfilePair> make_pairs(const std::vector<UserProfile>& pool_a, const std::vector<UserProfile>& pool_b,
                                    PairingType type, std::size_t n, std::mt19937_64& rng) {
  if (pool_a.empty() || pool_b.empty()) throw PairingError("make_pairs: empty profile pool");
  if (type == PairingType::level_k) throw PairingError("level pairs are built with make_level_pairs");

  auto check_pool = [&](const std::vector<UserProfile>& pool, ProfileType want, const char* which) {
    for (const auto& p : pool) {
      if (p.profile_type != want) {
        throw PairingError(std::string(which) + " holds a " + std::string(to_string(p.profile_type)) +
                           " profile; " + std::string(to_string(type)) + " pairing needs " +
                           std::string(to_string(want)));
      }
    }
  };
  if (type == PairingType::opposite) {
    check_pool(pool_a, ProfileType::negative, "pool_a");
    check_pool(pool_b, ProfileType::positive, "pool_b");
  } else {
    check_pool(pool_a, *member_type(type), "pool_a");
    check_pool(pool_b, *member_type(type), "pool_b");
  }

  const bool unordered = type != PairingType::opposite;
  auto skip = [&](std::size_t i, std::size_t j) { return pool_a[i].profile_id == pool_b[j].profile_id; };
  // Index combinations are keyed on profile ids so the same profile in both
  // pools collapses to one combination.
  std::vector<std::string> ids_a, ids_b;
  for (const auto& p : pool_a) ids_a.push_back(p.profile_id);
  for (const auto& p : pool_b) ids_b.push_back(p.profile_id);
  std::vector<std::string> universe = ids_a;
  universe.insert(universe.end(), ids_b.begin(), ids_b.end());
  std::sort(universe.begin(), universe.end());
  universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
  auto rank = [&](const std::string& id) {
    return static_cast<std::size_t>(std::lower_bound(universe.begin(), universe.end(), id) - universe.begin());
  };
  std::vector<std::size_t> rank_a, rank_b;
  for (const auto& id : ids_a) rank_a.push_back(rank(id));
  for (const auto& id : ids_b) rank_b.push_back(rank(id));
  auto key = [&](std::size_t i, std::size_t j) {
    const std::size_t a = rank_a[i], b = rank_b[j];
    if (unordered && b < a) return std::pair<std::size_t, std::size_t>{b, a};
    return std::pair<std::size_t, std::size_t>{a, b};
  };

  // Count distinct admissible combinations.
  std::size_t available = 0;
  {
    std::set<std::pair<std::size_t, std::size_t>> keys;
    const std::size_t total = pool_a.size() * pool_b.size();
    if (total <= 4'000'000) {
      for (std::size_t i = 0; i < pool_a.size(); ++i)
        for (std::size_t j = 0; j < pool_b.size(); ++j)
          if (!skip(i, j)) keys.insert(key(i, j));
      available = keys.size();
    } else {
      available = total;  // large pools: the sampler's sparse path applies
    }
  }
  if (n > available) {
    throw PairingError("requested " + std::to_string(n) + " " + std::string(to_string(type)) + " pairs but only " +
                       std::to_string(available) + " distinct combinations exist");
  }

  auto combos = sample_combinations(pool_a.size(), pool_b.size(), n, available, rng, skip, key);
  std::vector<ProfilePair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < combos.size(); ++k) {
    const auto [i, j] = combos[k];
    ProfilePair pair;
    pair.pair_id = make_pair_id(type, std::nullopt, k);
    pair.pairing_type = type;
    // Opposite: even positions open with the negative profile, giving
    // ceil(n/2) negative-first pairs.
    const bool a_first = type != PairingType::opposite || k % 2 == 0;
    pair.first = a_first ? pool_a[i] : pool_b[j];
    pair.second = a_first ? pool_b[j] : pool_a[i];
    check_pair(pair);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<ProfilePair> make_level_pairs(const std::vector<UserProfile>& level_pool, std::size_t n,
                                          std::mt19937_64& rng) {
  if (level_pool.size() < 2) throw PairingError("level pool needs at least two profiles");
  const auto level = level_pool.front().level;
  for (const auto& p : level_pool) {
    if (p.profile_type != ProfileType::level || !p.level || p.personas.size() != 1) {
      throw PairingError("level pool must hold singleton level profiles; got " + p.profile_id);
    }
    if (p.level != level) {
      throw PairingError("level pool mixes levels " + std::to_string(*level) + " and " + std::to_string(*p.level));
    }
  }
  const std::size_t m = level_pool.size();
  const std::size_t available = m * (m - 1) / 2;
  if (n > available) {
    throw PairingError("level " + std::to_string(*level) + " pool of " + std::to_string(m) + " profiles cannot give " +
                       std::to_string(n) + " distinct pairs");
  }
  auto combos = sample_combinations(
      m, m, n, available, rng, [](std::size_t i, std::size_t j) { return i == j; },
      [](std::size_t i, std::size_t j) { return i < j ? std::pair{i, j} : std::pair{j, i}; });
  std::vector<ProfilePair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < combos.size(); ++k) {
    ProfilePair pair;
    pair.pair_id = make_pair_id(PairingType::level_k, level, k);
    pair.pairing_type = PairingType::level_k;
    pair.level = level;
    pair.first = level_pool[combos[k].first];
    pair.second = level_pool[combos[k].second];
    check_pair(pair);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

nlohmann::json manifest_entry(const ProfilePair& pair) {
  nlohmann::json j{{"pair_id", pair.pair_id},
                   {"pairing_type", to_string(pair.pairing_type)},
                   {"first_profile_id", pair.first.profile_id},
                   {"second_profile_id", pair.second.profile_id}};
  if (pair.level) j["level"] = *pair.level;
  return j;
}

}  // namespace polardial::pairing
