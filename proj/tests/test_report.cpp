#include <doctest.h>

#include <sstream>

#include "polardial/report.hpp"
#include "support.hpp"

using namespace polardial;
using namespace polardial::report;
using metrics::Metric;

namespace {

metrics::GroupRow row(std::string model, std::string pairing, double c, double ppl) {
  metrics::GroupRow g;
  g.keys = {{"generator_model", model}, {"strategy", "joint"}, {"ordering", "none"}, {"pairing_type", pairing},
            {"level", ""}};
  g.n_dialogues = 10;
  g.mean[static_cast<std::size_t>(Metric::c_score)] = c;
  g.mean[static_cast<std::size_t>(Metric::perplexity)] = ppl;
  return g;
}

std::size_t idx(Metric m) { return static_cast<std::size_t>(m); }

}  // namespace

TEST_CASE("best and worst flags follow metric direction within a model") {
  const std::vector<Metric> all(metrics::kMetrics.begin(), metrics::kMetrics.end());
  const auto rows = table1_rows({row("m", "negative", 0.2, 9.0), row("m", "positive", 0.8, 7.0), row("solo", "mixed", 0.5, 8.0)},
                                all);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].flags[idx(Metric::c_score)] == Flag::worst);
  CHECK(rows[1].flags[idx(Metric::c_score)] == Flag::best);
  CHECK(rows[0].flags[idx(Metric::perplexity)] == Flag::worst);
  CHECK(rows[1].flags[idx(Metric::perplexity)] == Flag::best);
  CHECK(rows[2].flags[idx(Metric::c_score)] == Flag::none);

  const auto only_c = table1_rows({row("m", "negative", 0.2, 9.0)}, {Metric::c_score});
  CHECK_FALSE(only_c[0].group.at(Metric::perplexity));

  const auto csv = table1_csv(rows);
  const auto header = csv.substr(0, csv.find('\n'));
  for (const char* col : {"C score", "Contd.", "P Gap", "G-eval", "Perp.", "Q-DCE", "PairEval"}) {
    CHECK(header.find(col) != std::string::npos);
  }
  CHECK(csv.find("0.8000") != std::string::npos);
}

TEST_CASE("level medians") {
  const auto med = level_medians({testing::scored("a", "a", 0.003), testing::scored("b", "b", 0.007),
                                  testing::scored("c", "c", 0.009), testing::scored("d", "d", 0.995)});
  CHECK(med.at(1) == 0.007);
  CHECK(med.at(9) == 0.995);
  CHECK_FALSE(med.count(5));
}

TEST_CASE("statistics table rows") {
  StatsInputs in;
  in.corpus.n_profiles = 3;
  in.corpus.n_unique_personas = 12;
  in.corpus.mean_profile_words = 30.0;
  in.corpus.counts_per_level = {{1, 4}, {5, 6}, {9, 2}};
  in.synthesized.push_back({"negative", 7, 21.5});
  metrics::DialogueMetrics d;
  d.pair_id = "p";
  d.keys = {{"generator_model", "g"}, {"strategy", "joint"}, {"ordering", "none"}, {"pairing_type", "negative"}};
  d.n_utterances = 8;
  d.n_words = 80;
  in.dialogues = {d, d};
  in.pair_profile_words["p"] = 40.0;
  const auto csv = stats_csv(in);
  CHECK(csv.find("negative personas (s <= 0.01)") != std::string::npos);
  CHECK(csv.find("0.40 < s <= 0.60") != std::string::npos);
  CHECK(csv.find("positive personas (s > 0.99)") != std::string::npos);
  CHECK(csv.find("negative profiles,7,21.50") != std::string::npos);
  CHECK(csv.find("8.00,80.00") != std::string::npos);
}

TEST_CASE("bundle files") {
  testing::TempDir dir("report");
  write_bundle(dir.path() / "report", {"t", "l", "s", "{}"});
  for (const char* f : {"table1.csv", "levels.csv", "stats.csv", "plot_data.json"}) {
    CHECK(std::filesystem::exists(dir.path() / "report" / f));
  }
}
