#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "polardial/backends.hpp"
#include "polardial/persona.hpp"

namespace polardial::polarity {

inline constexpr double kDefaultThreshold = 0.99;
inline constexpr int kLevelCount = 9;

enum class Label { negative, neutral, positive };

std::string_view to_string(Label label);

struct Level {
  int level = 0;  // 1..9
  double lo = 0.0;
  double hi = 0.0;
};

// Upper edges of levels 1..8; level 9 is everything above 0.99.
inline constexpr std::array<double, kLevelCount - 1> kUpperEdges = {0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.99};

// s = confidence for a positive reply, 1 - confidence for a negative one.
// Throws ProtocolError for a confidence outside [0, 1].
PolarityScore score_from_reply(const backends::ClassifierReply& reply);

PolarityScore score_persona(std::string_view text, backends::Backend& classifier);

// positive iff s >= threshold, negative iff s <= 1 - threshold.
Label label_from_score(PolarityScore s, double threshold = kDefaultThreshold);

// Edges are upper-inclusive: 0.1 falls in level 2, not level 3.
Level level_from_score(PolarityScore s);

// Bin edges of one level; level must be in 1..9.
Level level_bounds(int level);

struct PartitionCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t neutral = 0;
  std::array<std::size_t, kLevelCount> per_level{};

  std::size_t total() const noexcept { return positive + negative + neutral; }
};

// Scores every persona without a polarity (bounded concurrency) and returns
// label and level counts. Personas scored before a failure keep their score;
// the thrown ScoringError reports how many were complete.
PartitionCounts partition_corpus(std::span<Persona> personas, backends::Backend& classifier,
                                 double threshold = kDefaultThreshold, std::size_t max_in_flight = 8);

// Counts from already-scored personas. Throws ScoringError for an unscored one.
PartitionCounts count_partition(std::span<const Persona> personas, double threshold = kDefaultThreshold);

// ---- binning kernels ---------------------------------------------------------
// Both return the level (1..9) for every score. The serial version is the
// reference implementation; the parallel one splits the span across OpenMP
// threads.
void bin_levels_serial(std::span<const double> scores, std::span<int> levels);
void bin_levels_parallel(std::span<const double> scores, std::span<int> levels);

std::array<std::size_t, kLevelCount> level_histogram_serial(std::span<const double> scores);
std::array<std::size_t, kLevelCount> level_histogram_parallel(std::span<const double> scores);

}  // namespace polardial::polarity
