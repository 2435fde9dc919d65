#include <doctest.h>

#include <set>

#include "polardial/error.hpp"
#include "polardial/pairing.hpp"

using namespace polardial;
using namespace polardial::pairing;

namespace {

std::vector<UserProfile> pool(ProfileType type, int n, const std::string& prefix) {
  std::vector<UserProfile> out;
  for (int i = 0; i < n; ++i) {
    UserProfile p;
    p.profile_id = prefix + std::to_string(i);
    p.personas = {prefix + "persona" + std::to_string(i)};
    p.profile_type = type;
    out.push_back(p);
  }
  return out;
}

std::vector<UserProfile> level_pool(int level, int n) {
  auto out = pool(ProfileType::level, n, "l" + std::to_string(level) + "-");
  for (auto& p : out) p.level = level;
  return out;
}

}  // namespace

TEST_CASE("same-type pairings are distinct unordered combinations") {
  const auto neg = pool(ProfileType::negative, 10, "n");
  std::mt19937_64 rng(1);
  const auto pairs = make_pairs(neg, neg, PairingType::negative, 45, rng);
  REQUIRE(pairs.size() == 45);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    CHECK(p.first.profile_id != p.second.profile_id);
    auto k = std::minmax(p.first.profile_id, p.second.profile_id);
    CHECK(seen.insert({k.first, k.second}).second);
  }
  CHECK(pairs[0].pair_id == "negative-000000");
  CHECK_THROWS_AS(make_pairs(neg, neg, PairingType::negative, 46, rng), PairingError);
}

TEST_CASE("opposite pairing: exactly ceil(n/2) negative-first pairs") {
  const auto neg = pool(ProfileType::negative, 80, "n");
  const auto pos = pool(ProfileType::positive, 80, "p");
  for (std::size_t n : {1u, 7u, 100u, 3000u}) {
    std::mt19937_64 rng(n);
    const auto pairs = make_pairs(neg, pos, PairingType::opposite, n, rng);
    std::size_t negative_first = 0;
    for (const auto& p : pairs) {
      negative_first += p.first.profile_type == ProfileType::negative ? 1 : 0;
      CHECK(p.first.profile_type != p.second.profile_type);
    }
    CHECK(negative_first == (n + 1) / 2);
  }
}

TEST_CASE("pool types are checked") {
  const auto neg = pool(ProfileType::negative, 4, "n");
  const auto pos = pool(ProfileType::positive, 4, "p");
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(make_pairs(neg, pos, PairingType::negative, 2, rng), PairingError);
  CHECK_THROWS_AS(make_pairs(pos, neg, PairingType::opposite, 2, rng), PairingError);
  CHECK_THROWS_AS(make_pairs({}, {}, PairingType::mixed, 1, rng), PairingError);

  ProfilePair self{"x", neg[0], neg[0], PairingType::negative, std::nullopt};
  CHECK_THROWS_AS(check_pair(self), PairingError);
}

TEST_CASE("pairing is deterministic for a seed") {
  const auto mixed = pool(ProfileType::mixed, 200, "m");
  std::mt19937_64 a(5), b(5), c(6);
  const auto x = make_pairs(mixed, mixed, PairingType::mixed, 300, a);
  const auto y = make_pairs(mixed, mixed, PairingType::mixed, 300, b);
  const auto z = make_pairs(mixed, mixed, PairingType::mixed, 300, c);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(manifest_entry(x[i]) == manifest_entry(y[i]));
  }
  bool differs = false;
  for (std::size_t i = 0; i < x.size(); ++i) differs = differs || manifest_entry(x[i]) != manifest_entry(z[i]);
  CHECK(differs);
}

TEST_CASE("level pairs") {
  const auto l3 = level_pool(3, 40);
  std::mt19937_64 rng(2);
  const auto pairs = make_level_pairs(l3, 500, rng);
  REQUIRE(pairs.size() == 500);
  CHECK(pairs[0].pair_id == "level3-000000");
  CHECK(pairs[0].level == 3);
  CHECK(manifest_entry(pairs[0]).at("level") == 3);
  CHECK_THROWS_AS(make_level_pairs(l3, 781, rng), PairingError);

  auto mixed = l3;
  mixed.push_back(level_pool(4, 1)[0]);
  CHECK_THROWS_AS(make_level_pairs(mixed, 2, rng), PairingError);
  CHECK_THROWS_AS(make_level_pairs(pool(ProfileType::negative, 5, "n"), 2, rng), PairingError);
}
