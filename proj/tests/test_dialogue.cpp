#include <doctest.h>

#include <algorithm>
#include <random>

#include "polardial/dialogue_gen.hpp"
#include "polardial/error.hpp"
#include "support.hpp"

using namespace polardial;
using namespace polardial::dialogue;

namespace {

struct Fixture {
  PersonaIndex index;
  prompts::TemplateSet templates = prompts::TemplateSet::defaults();
  pairing::ProfilePair pair;
  GenerationContext ctx() const { return {&index, &templates}; }

  Fixture() {
    index = PersonaIndex({testing::scored("a1", "i hate rain.", 0.005), testing::scored("a2", "i love dogs.", 0.995),
                          testing::scored("a3", "i am a nurse.", 0.45), testing::scored("b1", "i play chess.", 0.7),
                          testing::scored("b2", "i live in ohio.", 0.5)});
    pair.pair_id = "mixed-000001";
    pair.pairing_type = pairing::PairingType::mixed;
    pair.first = UserProfile{"u1", {"a2", "a1", "a3"}, ProfileType::mixed, std::nullopt};
    pair.second = UserProfile{"u2", {"b1", "b2"}, ProfileType::mixed, std::nullopt};
  }
};

nlohmann::json reply(const std::string& text) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
}

Dialogue kept_dialogue(std::vector<std::string> lines) {
  Dialogue d;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    d.utterances.push_back({static_cast<int>(i + 1), i % 2 == 0 ? Speaker::user1 : Speaker::user2, lines[i]});
  }
  return d;
}

}  // namespace

TEST_CASE("transcript parsing") {
  auto u = parse_transcript("User 1: hi there\nUser 2: hello!\nhow are you?\n**User 1:** fine");
  REQUIRE(u);
  REQUIRE(u->size() == 3);
  CHECK((*u)[1].text == "hello! how are you?");
  CHECK((*u)[2].speaker == Speaker::user1);
  CHECK((*u)[2].index == 3);
  CHECK((*u)[2].text == "fine");

  auto merged = parse_transcript("user 1: a\nUSER 1: b\nUser 2: c");
  REQUIRE(merged);
  CHECK(merged->size() == 2);
  CHECK((*merged)[0].text == "a b");

  CHECK_FALSE(parse_transcript("Sure! Here is a dialogue."));
  CHECK_FALSE(parse_transcript("User 2: I open\nUser 1: wrong order"));
  CHECK(render_transcript(*u).rfind("User 1: hi there\nUser 2: ", 0) == 0);
  CHECK(well_formed(*u));
}

TEST_CASE("dialogues round-trip through JSON") {
  Dialogue d = kept_dialogue({"a", "b"});
  d.dialogue_id = "x";
  d.level = 4;
  d.strategy = Strategy::turn_based;
  d.ordering = OrderingKind::c_asc;
  d.target_turns = 2;
  const auto back = dialogue_from_json(to_json(d));
  CHECK(back.dialogue_id == "x");
  CHECK(back.level == 4);
  CHECK(back.ordering == OrderingKind::c_asc);
  CHECK(back.utterances.size() == 2);
  CHECK(back.target_turns == 2);
}

TEST_CASE("c_asc worked example") {
  PersonaIndex idx({testing::scored("x", "x", 0.995), testing::scored("y", "y", 0.005), testing::scored("z", "z", 0.45)});
  UserProfile p{"p", {"x", "y", "z"}, ProfileType::mixed, std::nullopt};
  const auto out = order_profile(p, {OrderingKind::c_asc, 0.05}, idx);
  CHECK(out.personas == std::vector<std::string>{"z", "y", "x"});
  // Without the bias the two extremes tie and keep their input order.
  CHECK(order_profile(p, {OrderingKind::c_asc, 0.0}, idx).personas == std::vector<std::string>{"z", "x", "y"});
  CHECK(order_profile(p, {OrderingKind::asc}, idx).personas == std::vector<std::string>{"y", "z", "x"});
  CHECK(order_profile(p, {OrderingKind::dsc}, idx).personas == std::vector<std::string>{"x", "z", "y"});
  CHECK(order_profile(p, {OrderingKind::none}, idx).personas == p.personas);
}

TEST_CASE("ordering needs scores") {
  PersonaIndex idx({Persona{"x", "x", {}, std::nullopt}});
  UserProfile p{"p", {"x"}, ProfileType::original, std::nullopt};
  CHECK_THROWS_AS(order_profile(p, {OrderingKind::asc}, idx), OrderingError);
  CHECK_NOTHROW(order_profile(p, {OrderingKind::none}, idx));
}

TEST_CASE("turn distributions") {
  CHECK_THROWS_AS(TurnDistribution({{7, 1.0}}), ConfigError);
  CHECK_THROWS_AS(TurnDistribution({{8, 0.5}, {10, 0.4}}), ConfigError);
  CHECK_THROWS_AS(TurnDistribution({{8, 0.0}, {10, 1.0}}), ConfigError);
  CHECK(TurnDistribution::fallback().probs() == std::map<int, double>{{8, 0.6}, {10, 0.4}});

  std::vector<Dialogue> ds;
  for (int n : {8, 8, 10, 12, 9}) {
    std::vector<std::string> lines(static_cast<std::size_t>(n), "x");
    auto d = kept_dialogue(lines);
    ds.push_back(d);
  }
  ds.push_back(kept_dialogue({"a", "b"}));
  ds.back().filter_status = FilterStatus::rejected_refusal;
  const auto est = TurnDistribution::estimate(ds);
  CHECK(est.probs().at(8) == doctest::Approx(0.5));
  CHECK(est.probs().at(12) == doctest::Approx(0.25));
  CHECK_FALSE(est.probs().count(9));
  CHECK_FALSE(est.probs().count(2));
  CHECK_THROWS_AS(TurnDistribution::estimate({}), ConfigError);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const int t = sample_turn_endpoint(est, rng);
    CHECK((t == 8 || t == 10 || t == 12));
  }
}

TEST_CASE("outlier filter") {
  CHECK(filter_outliers(kept_dialogue({"hello", "I cannot assist with that request."})).filter_status ==
        FilterStatus::rejected_refusal);
  CHECK(filter_outliers(kept_dialogue({"hello there", "i cannot swim but i like boats"})).filter_status ==
        FilterStatus::kept);
  CHECK(filter_outliers(kept_dialogue({"i love dogs so much", "me too", "i love dogs so much", "ok"})).filter_status ==
        FilterStatus::rejected_repetition);
  CHECK(filter_outliers(kept_dialogue({"i love dogs so much", "i love dogs so much!", "cats?", "no"})).filter_status ==
        FilterStatus::kept);
  CHECK(filter_outliers(kept_dialogue({"go team go team go team go team go team go team", "ok"})).filter_status ==
        FilterStatus::rejected_repetition);

  Dialogue parse_fail;
  parse_fail.filter_status = FilterStatus::rejected_parse;
  parse_fail.raw = "I'm sorry, but I can't write that.";
  CHECK(filter_outliers(parse_fail).filter_status == FilterStatus::rejected_refusal);
  parse_fail.raw = "Here is a story.";
  CHECK(filter_outliers(parse_fail).filter_status == FilterStatus::rejected_parse);

  CHECK(trigram_jaccard("abc", "abc") == 1.0);
  CHECK(trigram_jaccard("abcdef", "uvwxyz") == 0.0);
}

TEST_CASE("joint generation: one call with both profiles") {
  Fixture f;
  backends::MockBackend chat(testing::spec(backends::Capability::chat, "gen"), [](const nlohmann::json& r) {
    CHECK(r.at("max_tokens") == kJointMaxTokens);
    CHECK(r.at("temperature") == 0.0);
    const auto prompt = r.at("messages")[0].at("content").get<std::string>();
    CHECK(prompt.find("- i love dogs.") != std::string::npos);
    CHECK(prompt.find("- i live in ohio.") != std::string::npos);
    return reply("User 1: hi\nUser 2: hey\nUser 1: i love dogs\nUser 2: i play chess");
  });
  const auto d = generate_joint(f.pair, chat, f.ctx());
  CHECK(chat.call_count() == 1);
  CHECK(d.filter_status == FilterStatus::kept);
  CHECK(d.utterances.size() == 4);
  CHECK(d.generator_model == "gen");
  CHECK(d.strategy == Strategy::joint);

  backends::MockBackend prose(testing::spec(backends::Capability::chat), [](const nlohmann::json&) {
    return reply("Here is a chat between two people.");
  });
  const auto bad = generate_joint(f.pair, prose, f.ctx());
  CHECK(bad.filter_status == FilterStatus::rejected_parse);
  CHECK(bad.raw == "Here is a chat between two people.");

  backends::MockBackend empty(testing::spec(backends::Capability::chat));
  CHECK_THROWS_AS(generate_joint(f.pair, empty, f.ctx()), GenerationError);
}

TEST_CASE("turn-based generation isolates each speaker's profile") {
  Fixture f;
  int turn = 0;
  backends::MockBackend chat(testing::spec(backends::Capability::chat, "gen"), [&](const nlohmann::json& r) {
    CHECK(r.at("max_tokens") == kTurnMaxTokens);
    const auto prompt = r.at("messages")[0].at("content").get<std::string>();
    const bool user1 = turn % 2 == 0;
    CHECK((prompt.find("i love dogs") != std::string::npos) == user1);
    CHECK((prompt.find("i play chess") != std::string::npos) == !user1);
    CHECK(prompt.find("short and concise") != std::string::npos);
    if (user1) {
      // c_asc: 0.45 first, then 0.005, then 0.995.
      CHECK(prompt.find("i am a nurse") < prompt.find("i hate rain"));
      CHECK(prompt.find("i hate rain") < prompt.find("i love dogs"));
    }
    ++turn;
    return reply(user1 ? "User 1: turn " + std::to_string(turn) : "turn " + std::to_string(turn));
  });
  const auto d = generate_turn_based(f.pair, 6, {OrderingKind::c_asc, 0.05}, chat, f.ctx());
  CHECK(chat.call_count() == 6);
  CHECK(d.filter_status == FilterStatus::kept);
  REQUIRE(d.utterances.size() == 6);
  CHECK(d.utterances[0].text == "turn 1");
  CHECK(d.utterances[5].speaker == Speaker::user2);
  CHECK(d.target_turns == 6);
  CHECK(d.ordering == OrderingKind::c_asc);
}

TEST_CASE("a failing turn keeps the partial transcript") {
  Fixture f;
  backends::MockBackend chat(testing::spec(backends::Capability::chat));
  int calls = 0;
  backends::MockBackend flaky(testing::spec(backends::Capability::chat), [&](const nlohmann::json&) {
    if (++calls == 3) throw BackendError(503, "down");
    return reply("ok " + std::to_string(calls));
  });
  try {
    generate_turn_based(f.pair, 8, {}, flaky, f.ctx());
    FAIL("expected TurnGenerationError");
  } catch (const TurnGenerationError& e) {
    CHECK(e.partial().utterances.size() == 2);
    CHECK(e.partial().filter_status == FilterStatus::rejected_error);
  }
  backends::MockBackend blank(testing::spec(backends::Capability::chat),
                              [](const nlohmann::json&) { return reply("  "); });
  CHECK(generate_turn_based(f.pair, 4, {}, blank, f.ctx()).filter_status == FilterStatus::rejected_parse);
}
