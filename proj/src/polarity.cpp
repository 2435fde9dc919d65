#include "polardial/polarity.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>

#include <spdlog/spdlog.h>

#include "polardial/error.hpp"
#include "polardial/parallel.hpp"

namespace polardial::polarity {
namespace {

inline int level_index(double s) {
  // Number of upper edges strictly below s; an edge value stays in the lower bin.
  return static_cast<int>(std::lower_bound(kUpperEdges.begin(), kUpperEdges.end(), s) - kUpperEdges.begin());
}

void tally(PartitionCounts& counts, PolarityScore s, double threshold) {
  switch (label_from_score(s, threshold)) {
    case Label::positive: ++counts.positive; break;
    case Label::negative: ++counts.negative; break;
    case Label::neutral: ++counts.neutral; break;
  }
  ++counts.per_level[static_cast<std::size_t>(level_from_score(s).level - 1)];
}

}  // namespace

std::string_view to_string(Label label) {
  switch (label) {
    case Label::negative: return "negative";
    case Label::neutral: return "neutral";
    case Label::positive: return "positive";
  }
  return "?";
}

PolarityScore score_from_reply(const backends::ClassifierReply& reply) {
  if (!(reply.confidence >= 0.0 && reply.confidence <= 1.0)) {
    throw ProtocolError("classifier confidence " + std::to_string(reply.confidence) + " outside [0, 1]");
  }
  if (reply.label == "positive") return PolarityScore(reply.confidence);
  if (reply.label == "negative") return PolarityScore(1.0 - reply.confidence);
  throw ProtocolError("classifier label must be positive|negative, got '" + reply.label + "'");
}

PolarityScore score_persona(std::string_view text, backends::Backend& classifier) {
  return score_from_reply(backends::classify(classifier, text));
}

Label label_from_score(PolarityScore s, double threshold) {
  if (s.value() >= threshold) return Label::positive;
  if (s.value() <= 1.0 - threshold) return Label::negative;
  return Label::neutral;
}

Level level_from_score(PolarityScore s) { return level_bounds(level_index(s.value()) + 1); }

Level level_bounds(int level) {
  if (level < 1 || level > kLevelCount) throw Error("polarity level " + std::to_string(level) + " outside 1..9");
  const auto i = static_cast<std::size_t>(level - 1);
  return Level{level, i == 0 ? 0.0 : kUpperEdges[i - 1], i + 1 == kLevelCount ? 1.0 : kUpperEdges[i]};
}

PartitionCounts partition_corpus(std::span<Persona> personas, backends::Backend& classifier, double threshold,
                                 std::size_t max_in_flight) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < personas.size(); ++i) {
    if (!personas[i].polarity) todo.push_back(i);
  }
  std::atomic<std::size_t> done{personas.size() - todo.size()};
  try {
    bounded_for(todo.size(), max_in_flight, [&](std::size_t k) {
      Persona& p = personas[todo[k]];
      try {
        p.polarity = score_persona(p.text, classifier);
      } catch (const Error& e) {
        throw ScoringError(p.persona_id, done.load(), "scoring persona " + p.persona_id + " failed: " + e.what());
      }
      ++done;
    });
  } catch (const ScoringError& e) {
    spdlog::error("{} ({} of {} personas scored)", e.what(), done.load(), personas.size());
    throw ScoringError(e.persona_id(), done.load(), e.what());
  }
  return count_partition(personas, threshold);
}

PartitionCounts count_partition(std::span<const Persona> personas, double threshold) {
  PartitionCounts counts;
  for (const auto& p : personas) {
    if (!p.polarity) throw ScoringError(p.persona_id, counts.total(), "persona " + p.persona_id + " has no score");
    tally(counts, *p.polarity, threshold);
  }
  return counts;
}

void bin_levels_serial(std::span<const double> scores, std::span<int> levels) {
  if (levels.size() != scores.size()) throw Error("bin_levels: output size mismatch");
  for (std::size_t i = 0; i < scores.size(); ++i) levels[i] = level_index(scores[i]) + 1;
}

void bin_levels_parallel(std::span<const double> scores, std::span<int> levels) {
  if (levels.size() != scores.size()) throw Error("bin_levels: output size mismatch");
  const auto n = static_cast<std::ptrdiff_t>(scores.size());
  const double* in = scores.data();
  int* out = levels.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    // Branch-free count keeps the loop vectorizable.
    int level = 1;
    for (double edge : kUpperEdges) level += in[i] > edge ? 1 : 0;
    out[i] = level;
  }
}

std::array<std::size_t, kLevelCount> level_histogram_serial(std::span<const double> scores) {
  std::array<std::size_t, kLevelCount> hist{};
  for (double s : scores) ++hist[static_cast<std::size_t>(level_index(s))];
  return hist;
}

std::array<std::size_t, kLevelCount> level_histogram_parallel(std::span<const double> scores) {
  std::array<std::size_t, kLevelCount> hist{};
  const auto n = static_cast<std::ptrdiff_t>(scores.size());
  const double* in = scores.data();
#pragma omp parallel
  {
    std::array<std::size_t, kLevelCount> local{};
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      int idx = 0;
      for (double edge : kUpperEdges) idx += in[i] > edge ? 1 : 0;
      ++local[static_cast<std::size_t>(idx)];
    }
#pragma omp critical
    for (std::size_t b = 0; b < hist.size(); ++b) hist[b] += local[b];
  }
  return hist;
}

}  // namespace polardial::polarity
