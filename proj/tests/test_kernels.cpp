#include <doctest.h>

#include <random>

#include "polardial/kernels.hpp"
#include "polardial/polarity.hpp"

using namespace polardial;

namespace {

metrics::VerdictMatrix random_matrix(std::mt19937_64& rng) {
  metrics::VerdictMatrix m;
  const int rows = std::uniform_int_distribution<int>(1, 20)(rng);
  for (int r = 0; r < rows; ++r) {
    std::vector<std::int8_t> row(std::uniform_int_distribution<std::size_t>(1, 10)(rng));
    for (auto& v : row) v = static_cast<std::int8_t>(std::uniform_int_distribution<int>(-1, 1)(rng));
    m.add_row(row);
  }
  return m;
}

}  // namespace

TEST_CASE("parallel binning matches the serial reference") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(100000);
  for (auto& s : scores) s = u(rng);
  for (double e : polarity::kUpperEdges) scores.push_back(e);
  scores.push_back(0.0);
  scores.push_back(1.0);

  std::vector<int> a(scores.size()), b(scores.size());
  polarity::bin_levels_serial(scores, a);
  polarity::bin_levels_parallel(scores, b);
  CHECK(a == b);
  CHECK(polarity::level_histogram_serial(scores) == polarity::level_histogram_parallel(scores));
}

TEST_CASE("parallel consistency batch matches the serial reference") {
  std::mt19937_64 rng(5);
  std::vector<metrics::VerdictMatrix> batch;
  for (int i = 0; i < 300; ++i) batch.push_back(random_matrix(rng));
  const auto a = metrics::consistency_batch_serial(batch);
  const auto b = metrics::consistency_batch_parallel(batch);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].c_score == b[i].c_score);
    CHECK(a[i].contd == b[i].contd);
    CHECK(a[i].per_utterance == b[i].per_utterance);
    CHECK(a[i].entail_count == b[i].entail_count);
  }
}

TEST_CASE("parallel perplexity batch matches the serial reference") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lp(-8.0, 0.0);
  std::vector<double> values;
  std::vector<std::size_t> offsets{0};
  for (int i = 0; i < 500; ++i) {
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    for (int t = 0; t < n; ++t) values.push_back(lp(rng));
    offsets.push_back(values.size());
  }
  CHECK(metrics::perplexity_batch_serial(values, offsets) == metrics::perplexity_batch_parallel(values, offsets));
}
