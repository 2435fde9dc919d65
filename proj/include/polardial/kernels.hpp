#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace polardial::metrics {

// NLI verdicts of one dialogue in row-compressed form: row i holds the
// verdicts (+1 entailment, 0 neutral, -1 contradiction) of utterance i
// against each persona of its speaker.
struct VerdictMatrix {
  std::vector<std::int8_t> values;
  std::vector<std::size_t> row_offsets{0};

  void add_row(std::span<const std::int8_t> row);
  std::size_t rows() const noexcept { return row_offsets.size() - 1; }
  std::span<const std::int8_t> row(std::size_t i) const {
    return {values.data() + row_offsets[i], row_offsets[i + 1] - row_offsets[i]};
  }
};

struct ConsistencyReport {
  double c_score = 0.0;
  // Percent of contradictions among non-neutral verdicts; empty when every
  // verdict is neutral.
  std::optional<double> contd;
  std::size_t entail_count = 0;
  std::size_t contradiction_count = 0;
  std::vector<int> per_utterance;
};

// Reference implementation. Throws MetricError for a matrix without rows.
ConsistencyReport consistency_from_verdicts(const VerdictMatrix& verdicts);

// Batch reductions over many dialogues. The serial version calls the
// reference per dialogue; the parallel version distributes dialogues over
// OpenMP threads. Results are identical.
std::vector<ConsistencyReport> consistency_batch_serial(std::span<const VerdictMatrix> batch);
std::vector<ConsistencyReport> consistency_batch_parallel(std::span<const VerdictMatrix> batch);

// exp(-mean log-probability). Throws MetricError for an empty sequence.
double perplexity_from_logprobs(std::span<const double> logprobs);

// Perplexity of many token sequences stored back to back: sequence i spans
// [offsets[i], offsets[i+1]).
std::vector<double> perplexity_batch_serial(std::span<const double> logprobs, std::span<const std::size_t> offsets);
std::vector<double> perplexity_batch_parallel(std::span<const double> logprobs, std::span<const std::size_t> offsets);

}  // namespace polardial::metrics
