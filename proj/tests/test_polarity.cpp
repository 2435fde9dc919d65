#include <doctest.h>

#include <random>

#include "polardial/error.hpp"
#include "polardial/polarity.hpp"
#include "support.hpp"

using namespace polardial;
using polarity::Label;

TEST_CASE("classifier replies map to s") {
  CHECK(polarity::score_from_reply({"positive", 0.97}).value() == doctest::Approx(0.97));
  CHECK(polarity::score_from_reply({"negative", 0.97}).value() == doctest::Approx(0.03));
  CHECK_THROWS_AS(polarity::score_from_reply({"positive", 1.2}), ProtocolError);
  CHECK_THROWS_AS(polarity::score_from_reply({"negative", -0.1}), ProtocolError);
  CHECK_THROWS_AS(PolarityScore(1.5), ProtocolError);
}

TEST_CASE("labels at the default threshold") {
  CHECK(polarity::label_from_score(PolarityScore(0.99)) == Label::positive);
  CHECK(polarity::label_from_score(PolarityScore(0.989)) == Label::neutral);
  CHECK(polarity::label_from_score(PolarityScore(0.01)) == Label::negative);
  CHECK(polarity::label_from_score(PolarityScore(0.0101)) == Label::neutral);
  CHECK(polarity::label_from_score(PolarityScore(0.7), 0.6) == Label::positive);
}

TEST_CASE("level edges belong to the lower bin") {
  const double edges[] = {0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.99};
  for (int i = 0; i < 8; ++i) {
    CHECK(polarity::level_from_score(PolarityScore(edges[i])).level == i + 1);
    CHECK(polarity::level_from_score(PolarityScore(std::nextafter(edges[i], 1.0))).level == i + 2);
  }
  CHECK(polarity::level_from_score(PolarityScore(0.0)).level == 1);
  CHECK(polarity::level_from_score(PolarityScore(1.0)).level == 9);
  CHECK(polarity::level_bounds(4).lo == 0.2);
  CHECK(polarity::level_bounds(4).hi == 0.4);
  CHECK_THROWS(polarity::level_bounds(0));
  CHECK_THROWS(polarity::level_bounds(10));
}

TEST_CASE("serial and parallel binning agree") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(200000);
  for (auto& x : s) x = u(rng);
  // Plant every edge.
  for (std::size_t i = 0; i < polarity::kUpperEdges.size(); ++i) s[i] = polarity::kUpperEdges[i];
  std::vector<int> a(s.size()), b(s.size());
  polarity::bin_levels_serial(s, a);
  polarity::bin_levels_parallel(s, b);
  CHECK(a == b);
  CHECK(polarity::level_histogram_serial(s) == polarity::level_histogram_parallel(s));
  for (std::size_t i = 0; i < 1000; ++i) CHECK(a[i] == polarity::level_from_score(PolarityScore(s[i])).level);
}

TEST_CASE("partition counts and resumable scoring") {
  std::vector<Persona> personas;
  const double scores[] = {0.999, 0.995, 0.5, 0.005, 0.3};
  for (int i = 0; i < 5; ++i) personas.push_back(Persona{"id" + std::to_string(i), "text " + std::to_string(i), {}, {}});
  std::map<std::string, double> table;
  for (int i = 0; i < 5; ++i) table["text " + std::to_string(i)] = scores[i];

  auto classifier = std::make_shared<backends::MockBackend>(
      testing::spec(backends::Capability::classify), [&](const nlohmann::json& r) {
        const double s = table.at(r.at("text").get<std::string>());
        return s >= 0.5 ? nlohmann::json{{"label", "positive"}, {"confidence", s}}
                        : nlohmann::json{{"label", "negative"}, {"confidence", 1.0 - s}};
      });
  personas[2].polarity = PolarityScore(0.5);
  const auto counts = polarity::partition_corpus(personas, *classifier, 0.99, 3);
  CHECK(classifier->call_count() == 4);
  CHECK(counts.positive == 2);
  CHECK(counts.negative == 1);
  CHECK(counts.neutral == 2);
  CHECK(counts.total() == 5);
  CHECK(counts.per_level[8] == 2);
  CHECK(counts.per_level[0] == 1);
  CHECK(personas[4].polarity->value() == doctest::Approx(0.3));

  const auto again = polarity::partition_corpus(personas, *classifier, 0.99, 3);
  CHECK(classifier->call_count() == 4);
  CHECK(again.positive == counts.positive);
}

TEST_CASE("a classifier failure reports progress and keeps earlier scores") {
  std::vector<Persona> personas;
  for (int i = 0; i < 6; ++i) personas.push_back(Persona{"id" + std::to_string(i), "t" + std::to_string(i), {}, {}});
  auto classifier = std::make_shared<backends::MockBackend>(testing::spec(backends::Capability::classify));
  for (int i = 0; i < 3; ++i) {
    classifier->script({{"text", "t" + std::to_string(i)}}, {{"label", "positive"}, {"confidence", 0.9}});
  }
  try {
    polarity::partition_corpus(personas, *classifier, 0.99, 1);
    FAIL("expected ScoringError");
  } catch (const ScoringError& e) {
    CHECK(e.completed() == 3);
    CHECK(e.persona_id() == "id3");
  }
  CHECK(personas[0].polarity.has_value());
  CHECK(personas[2].polarity.has_value());
  CHECK_FALSE(personas[3].polarity.has_value());
  CHECK_THROWS_AS(polarity::count_partition(personas), ScoringError);
}
