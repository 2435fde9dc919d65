#include "polardial/kernels.hpp"

#include <cmath>

#include "polardial/error.hpp"

namespace polardial::metrics {

void VerdictMatrix::add_row(std::span<const std::int8_t> row) {
  for (auto v : row) {
    if (v < -1 || v > 1) throw MetricError("verdict values must be -1, 0 or +1");
  }
  values.insert(values.end(), row.begin(), row.end());
  row_offsets.push_back(values.size());
}

ConsistencyReport consistency_from_verdicts(const VerdictMatrix& verdicts) {
  const std::size_t n = verdicts.rows();
  if (n == 0) throw MetricError("consistency of an empty dialogue is undefined");
  ConsistencyReport report;
  report.per_utterance.reserve(n);
  long total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int sum = 0;
    for (const auto v : verdicts.row(i)) {
      sum += v;
      report.entail_count += v == 1 ? 1 : 0;
      report.contradiction_count += v == -1 ? 1 : 0;
    }
    report.per_utterance.push_back(sum);
    total += sum;
  }
  report.c_score = static_cast<double>(total) / static_cast<double>(n);
  const std::size_t decided = report.entail_count + report.contradiction_count;
  if (decided > 0) {
    report.contd = 100.0 * static_cast<double>(report.contradiction_count) / static_cast<double>(decided);
  }
  return report;
}

std::vector<ConsistencyReport> consistency_batch_serial(std::span<const VerdictMatrix> batch) {
  std::vector<ConsistencyReport> out;
  out.reserve(batch.size());
  for (const auto& m : batch) out.push_back(consistency_from_verdicts(m));
  return out;
}

std::vector<ConsistencyReport> consistency_batch_parallel(std::span<const VerdictMatrix> batch) {
  for (const auto& m : batch) {
    if (m.rows() == 0) throw MetricError("consistency of an empty dialogue is undefined");
  }
  std::vector<ConsistencyReport> out(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t d = 0; d < n; ++d) {
    const VerdictMatrix& m = batch[static_cast<std::size_t>(d)];
    ConsistencyReport& r = out[static_cast<std::size_t>(d)];
    const std::size_t rows = m.rows();
    r.per_utterance.resize(rows);
    long total = 0;
    std::size_t entail = 0;
    std::size_t contra = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      int sum = 0;
      for (std::size_t k = m.row_offsets[i]; k < m.row_offsets[i + 1]; ++k) {
        const int v = m.values[k];
        sum += v;
        entail += static_cast<std::size_t>(v == 1);
        contra += static_cast<std::size_t>(v == -1);
      }
      r.per_utterance[i] = sum;
      total += sum;
    }
    r.c_score = static_cast<double>(total) / static_cast<double>(rows);
    r.entail_count = entail;
    r.contradiction_count = contra;
    if (entail + contra > 0) r.contd = 100.0 * static_cast<double>(contra) / static_cast<double>(entail + contra);
  }
  return out;
}

double perplexity_from_logprobs(std::span<const double> logprobs) {
  if (logprobs.empty()) throw MetricError("perplexity of an empty token sequence is undefined");
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

std::vector<double> perplexity_batch_serial(std::span<const double> logprobs, std::span<const std::size_t> offsets) {
  std::vector<double> out;
  if (offsets.size() < 2) return out;
  out.reserve(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    out.push_back(perplexity_from_logprobs(logprobs.subspan(offsets[i], offsets[i + 1] - offsets[i])));
  }
  return out;
}

std::vector<double> perplexity_batch_parallel(std::span<const double> logprobs, std::span<const std::size_t> offsets) {
  if (offsets.size() < 2) return {};
  const auto n = static_cast<std::ptrdiff_t>(offsets.size() - 1);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (offsets[static_cast<std::size_t>(i) + 1] <= offsets[static_cast<std::size_t>(i)]) {
      throw MetricError("perplexity of an empty token sequence is undefined");
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* lp = logprobs.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t b = offsets[static_cast<std::size_t>(i)];
    const std::size_t e = offsets[static_cast<std::size_t>(i) + 1];
    double sum = 0.0;
    for (std::size_t k = b; k < e; ++k) sum += lp[k];
    out[static_cast<std::size_t>(i)] = std::exp(-sum / static_cast<double>(e - b));
  }
  return out;
}

}  // namespace polardial::metrics
