// Serial reference kernels against their OpenMP versions.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "polardial/kernels.hpp"
#include "polardial/polarity.hpp"

namespace {

using namespace polardial;

std::vector<double> scores(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& s : out) s = u(rng);
  return out;
}

std::vector<metrics::VerdictMatrix> verdicts(std::size_t dialogues) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> v(-1, 1);
  std::vector<metrics::VerdictMatrix> out(dialogues);
  for (auto& m : out) {
    for (int row = 0; row < 10; ++row) {
      std::vector<std::int8_t> r(5);
      for (auto& x : r) x = static_cast<std::int8_t>(v(rng));
      m.add_row(r);
    }
  }
  return out;
}

struct Logprobs {
  std::vector<double> values;
  std::vector<std::size_t> offsets{0};
};

Logprobs logprobs(std::size_t sequences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lp(-8.0, 0.0);
  Logprobs out;
  for (std::size_t i = 0; i < sequences; ++i) {
    for (int t = 0; t < 200; ++t) out.values.push_back(lp(rng));
    out.offsets.push_back(out.values.size());
  }
  return out;
}

template <void (*Kernel)(std::span<const double>, std::span<int>)>
void BM_bin_levels(benchmark::State& state) {
  const auto s = scores(static_cast<std::size_t>(state.range(0)));
  std::vector<int> levels(s.size());
  for (auto _ : state) {
    Kernel(s, levels);
    benchmark::DoNotOptimize(levels.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_bin_levels<polarity::bin_levels_serial>)->Name("bin_levels/serial")->Arg(1 << 20);
BENCHMARK(BM_bin_levels<polarity::bin_levels_parallel>)->Name("bin_levels/omp")->Arg(1 << 20);

template <std::vector<metrics::ConsistencyReport> (*Kernel)(std::span<const metrics::VerdictMatrix>)>
void BM_consistency(benchmark::State& state) {
  const auto batch = verdicts(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_consistency<metrics::consistency_batch_serial>)->Name("consistency/serial")->Arg(60000);
BENCHMARK(BM_consistency<metrics::consistency_batch_parallel>)->Name("consistency/omp")->Arg(60000);

template <std::vector<double> (*Kernel)(std::span<const double>, std::span<const std::size_t>)>
void BM_perplexity(benchmark::State& state) {
  const auto lp = logprobs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(lp.values, lp.offsets));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_perplexity<metrics::perplexity_batch_serial>)->Name("perplexity/serial")->Arg(20000);
BENCHMARK(BM_perplexity<metrics::perplexity_batch_parallel>)->Name("perplexity/omp")->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
