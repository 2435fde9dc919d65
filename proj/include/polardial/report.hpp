#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/corpus.hpp"
#include "polardial/metrics.hpp"

namespace polardial::report {

// Keys of one report row, in column order.
inline const std::vector<std::string> kGroupKeys = {"generator_model", "strategy", "ordering", "pairing_type", "level"};

enum class Flag { none, best, worst };
std::string_view to_string(Flag f);

struct TableRow {
  metrics::GroupRow group;
  std::array<Flag, metrics::kMetrics.size()> flags{};
};

// Summary table rows. Best and worst values are flagged per metric among the rows
// of one generator model (direction taken from the metric); ties share a
// flag, and a model with a single row gets no flags. Unselected metrics are
// blanked.
std::vector<TableRow> table1_rows(const std::vector<metrics::GroupRow>& groups,
                                  const std::vector<metrics::Metric>& selected);

std::string table1_csv(const std::vector<TableRow>& rows);
// Per-group means, counts, pooled Contd. and dialogue shape.
std::string aggregate_csv(const std::vector<metrics::GroupRow>& groups);

// Median polarity score of the scored personas in each level (x axis of the
// per-level curves). Levels without personas are absent.
std::map<int, double> level_medians(const std::vector<Persona>& personas);

struct SynthesizedSummary {
  std::string profile_type;
  std::size_t n_profiles = 0;
  double mean_profile_words = 0.0;
};

// Inputs of the corpus, profile and dialogue statistics table.
struct StatsInputs {
  corpus::CorpusStats corpus;
  std::vector<SynthesizedSummary> synthesized;
  // Kept dialogues with their pair's combined profile word count.
  std::vector<metrics::DialogueMetrics> dialogues;
  std::map<std::string, double> pair_profile_words;
};

std::string stats_csv(const StatsInputs& in);
std::string levels_csv(const std::map<int, double>& medians, const std::map<int, std::size_t>& level_counts,
                       const std::vector<metrics::GroupRow>& groups, const std::vector<metrics::Metric>& selected);
nlohmann::json plot_data(const std::map<int, double>& medians, const std::vector<TableRow>& rows,
                         const std::vector<metrics::Metric>& selected);

struct Bundle {
  std::string table1;
  std::string levels;
  std::string stats;
  std::string plot_data;
};

// report/table1.csv, levels.csv, stats.csv, plot_data.json.
void write_bundle(const std::filesystem::path& report_dir, const Bundle& bundle);

}  // namespace polardial::report
