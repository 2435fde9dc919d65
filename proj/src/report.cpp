#include "polardial/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "polardial/json_io.hpp"
#include "polardial/polarity.hpp"

namespace polardial::report {
namespace {

using metrics::Metric;
using metrics::kMetrics;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt(const std::optional<double>& v, int digits = 4) { return v ? fmt(*v, digits) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_row(std::ostringstream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

std::string key(const metrics::GroupRow& g, const std::string& k) {
  auto it = g.keys.find(k);
  return it == g.keys.end() ? std::string() : it->second;
}

bool is_selected(Metric m, const std::vector<Metric>& selected) {
  return std::find(selected.begin(), selected.end(), m) != selected.end();
}

std::string header_with_arrow(Metric m) {
  return std::string(metrics::metric_header(m)) + (metrics::higher_is_better(m) ? " ↑" : " ↓");
}

}  // namespace

std::string_view to_string(Flag f) {
  switch (f) {
    case Flag::none: return "";
    case Flag::best: return "best";
    case Flag::worst: return "worst";
  }
  return "";
}

std::vector<TableRow> table1_rows(const std::vector<metrics::GroupRow>& groups, const std::vector<Metric>& selected) {
  std::vector<TableRow> rows;
  for (const auto& g : groups) {
    TableRow row{g, {}};
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      if (!is_selected(kMetrics[m], selected)) {
        row.group.mean[m].reset();
        row.group.count[m] = 0;
      }
    }
    if (!is_selected(Metric::contd, selected)) row.group.pooled_contd.reset();
    rows.push_back(std::move(row));
  }
  for (Metric m : selected) {
    if (std::none_of(rows.begin(), rows.end(), [&](const TableRow& r) { return r.group.at(m).has_value(); })) {
      spdlog::warn("report: no values for metric '{}'; column left blank", metrics::metric_key(m));
    }
  }

  std::map<std::string, std::vector<std::size_t>> blocks;
  for (std::size_t i = 0; i < rows.size(); ++i) blocks[key(rows[i].group, "generator_model")].push_back(i);
  for (const auto& [model, members] : blocks) {
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      std::vector<std::size_t> present;
      for (auto i : members) {
        if (rows[i].group.mean[m]) present.push_back(i);
      }
      if (present.size() < 2) continue;
      double lo = *rows[present[0]].group.mean[m];
      double hi = lo;
      for (auto i : present) {
        lo = std::min(lo, *rows[i].group.mean[m]);
        hi = std::max(hi, *rows[i].group.mean[m]);
      }
      if (lo == hi) continue;
      const bool up = metrics::higher_is_better(kMetrics[m]);
      for (auto i : present) {
        const double v = *rows[i].group.mean[m];
        if (v == (up ? hi : lo)) rows[i].flags[m] = Flag::best;
        if (v == (up ? lo : hi)) rows[i].flags[m] = Flag::worst;
      }
    }
  }
  return rows;
}

std::string table1_csv(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  std::vector<std::string> header = kGroupKeys;
  header.push_back("n_dialogues");
  for (Metric m : kMetrics) {
    header.push_back(header_with_arrow(m));
    header.push_back(std::string(metrics::metric_key(m)) + "_flag");
  }
  header.push_back("Contd. pooled ↓");
  write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> fields;
    for (const auto& k : kGroupKeys) fields.push_back(key(r.group, k));
    fields.push_back(std::to_string(r.group.n_dialogues));
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      fields.push_back(fmt(r.group.mean[m]));
      fields.push_back(std::string(to_string(r.flags[m])));
    }
    fields.push_back(fmt(r.group.pooled_contd));
    write_row(out, fields);
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<metrics::GroupRow>& groups) {
  std::ostringstream out;
  std::vector<std::string> header = kGroupKeys;
  header.push_back("n_dialogues");
  for (Metric m : kMetrics) {
    header.push_back(std::string(metrics::metric_key(m)));
    header.push_back(std::string(metrics::metric_key(m)) + "_n");
  }
  for (const char* h : {"contd_pooled", "mean_utterances", "mean_words"}) header.emplace_back(h);
  write_row(out, header);
  for (const auto& g : groups) {
    std::vector<std::string> fields;
    for (const auto& k : kGroupKeys) fields.push_back(key(g, k));
    fields.push_back(std::to_string(g.n_dialogues));
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      fields.push_back(fmt(g.mean[m], 6));
      fields.push_back(std::to_string(g.count[m]));
    }
    fields.push_back(fmt(g.pooled_contd, 6));
    fields.push_back(fmt(g.mean_utterances, 4));
    fields.push_back(fmt(g.mean_words, 4));
    write_row(out, fields);
  }
  return out.str();
}

std::map<int, double> level_medians(const std::vector<Persona>& personas) {
  std::map<int, std::vector<double>> bins;
  for (const auto& p : personas) {
    if (!p.polarity) continue;
    bins[polarity::level_from_score(*p.polarity).level].push_back(p.polarity->value());
  }
  std::map<int, double> out;
  for (auto& [level, v] : bins) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[level] = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return out;
}

std::string stats_csv(const StatsInputs& in) {
  std::ostringstream out;
  write_row(out, {"source", "personas_profiles", "n_samples", "profile_words", "dialogue_turns", "dialogue_words"});
  const auto& c = in.corpus;
  write_row(out, {"corpus", "unique profiles", std::to_string(c.n_profiles), fmt(c.mean_profile_words, 2), "-", "-"});
  write_row(out, {"corpus", "unique personas", std::to_string(c.n_unique_personas), fmt(c.mean_persona_words, 2), "-",
                  "-"});
  for (const auto& [level, n] : c.counts_per_level) {
    const auto b = polarity::level_bounds(level);
    std::string label;
    if (level == 1) {
      label = "negative personas (s <= " + fmt(b.hi, 2) + ")";
    } else if (level == polarity::kLevelCount) {
      label = "positive personas (s > " + fmt(b.lo, 2) + ")";
    } else {
      label = fmt(b.lo, 2) + " < s <= " + fmt(b.hi, 2);
    }
    auto w = c.mean_words_per_level.find(level);
    write_row(out, {"corpus", label, std::to_string(n), w == c.mean_words_per_level.end() ? "-" : fmt(w->second, 2),
                    "-", "-"});
  }
  for (const auto& s : in.synthesized) {
    write_row(out, {"synthesized", s.profile_type + " profiles", std::to_string(s.n_profiles),
                    fmt(s.mean_profile_words, 2), "-", "-"});
  }

  struct Acc {
    std::size_t n = 0;
    double profile_words = 0.0;
    double turns = 0.0;
    double words = 0.0;
  };
  std::map<std::vector<std::string>, Acc> groups;
  for (const auto& d : in.dialogues) {
    std::vector<std::string> k;
    for (const char* name : {"generator_model", "strategy", "ordering", "pairing_type", "level"}) {
      auto it = d.keys.find(name);
      k.push_back(it == d.keys.end() ? std::string() : it->second);
    }
    Acc& a = groups[k];
    ++a.n;
    auto pw = in.pair_profile_words.find(d.pair_id);
    if (pw != in.pair_profile_words.end()) a.profile_words += pw->second;
    a.turns += static_cast<double>(d.n_utterances);
    a.words += static_cast<double>(d.n_words);
  }
  for (const auto& [k, a] : groups) {
    std::string label = k[3] + " pairings";
    if (!k[4].empty()) label += " level " + k[4];
    label += " (" + k[0] + ", " + k[1];
    if (k[1] != "joint") label += "/" + k[2];
    label += ")";
    const double n = static_cast<double>(a.n);
    write_row(out, {"dialogues", label, std::to_string(a.n), fmt(a.profile_words / n, 2), fmt(a.turns / n, 2),
                    fmt(a.words / n, 2)});
  }
  return out.str();
}

std::string levels_csv(const std::map<int, double>& medians, const std::map<int, std::size_t>& level_counts,
                       const std::vector<metrics::GroupRow>& groups, const std::vector<Metric>& selected) {
  std::ostringstream out;
  std::vector<std::string> header = {"level", "lo", "hi", "median_s", "n_personas", "generator_model", "strategy",
                                     "ordering", "n_dialogues"};
  for (Metric m : kMetrics) header.push_back(header_with_arrow(m));
  write_row(out, header);
  std::map<int, std::vector<const metrics::GroupRow*>> by_level;
  for (const auto& g : groups) {
    const std::string l = key(g, "level");
    if (!l.empty()) by_level[std::stoi(l)].push_back(&g);
  }
  for (int level = 1; level <= polarity::kLevelCount; ++level) {
    const auto b = polarity::level_bounds(level);
    auto med = medians.find(level);
    auto cnt = level_counts.find(level);
    std::vector<std::string> base = {std::to_string(level), fmt(b.lo, 2), fmt(b.hi, 2),
                                     med == medians.end() ? "" : fmt(med->second, 6),
                                     cnt == level_counts.end() ? "0" : std::to_string(cnt->second)};
    auto rows = by_level.find(level);
    if (rows == by_level.end()) {
      auto fields = base;
      fields.resize(header.size());
      write_row(out, fields);
      continue;
    }
    for (const auto* g : rows->second) {
      auto fields = base;
      for (const char* k : {"generator_model", "strategy", "ordering"}) fields.push_back(key(*g, k));
      fields.push_back(std::to_string(g->n_dialogues));
      for (Metric m : kMetrics) fields.push_back(is_selected(m, selected) ? fmt(g->at(m)) : std::string());
      write_row(out, fields);
    }
  }
  return out.str();
}

nlohmann::json plot_data(const std::map<int, double>& medians, const std::vector<TableRow>& rows,
                         const std::vector<Metric>& selected) {
  nlohmann::json metrics_doc = nlohmann::json::array();
  for (Metric m : selected) {
    metrics_doc.push_back({{"key", metrics::metric_key(m)},
                           {"header", metrics::metric_header(m)},
                           {"group", metrics::metric_group(m)},
                           {"higher_is_better", metrics::higher_is_better(m)}});
  }
  nlohmann::json series = nlohmann::json::array();
  nlohmann::json table = nlohmann::json::array();
  std::map<std::vector<std::string>, nlohmann::json> curves;
  for (const auto& r : rows) {
    nlohmann::json entry{{"keys", r.group.keys}, {"n_dialogues", r.group.n_dialogues}};
    nlohmann::json values = nlohmann::json::object();
    nlohmann::json flags = nlohmann::json::object();
    for (Metric m : selected) {
      const auto i = static_cast<std::size_t>(m);
      values[std::string(metrics::metric_key(m))] = r.group.mean[i] ? nlohmann::json(*r.group.mean[i]) : nlohmann::json(nullptr);
      if (r.flags[i] != Flag::none) flags[std::string(metrics::metric_key(m))] = to_string(r.flags[i]);
    }
    entry["values"] = values;
    entry["flags"] = flags;
    table.push_back(entry);

    const std::string l = key(r.group, "level");
    if (l.empty()) continue;
    const int level = std::stoi(l);
    auto med = medians.find(level);
    if (med == medians.end()) continue;
    std::vector<std::string> ck = {key(r.group, "generator_model"), key(r.group, "strategy"), key(r.group, "ordering")};
    auto& curve = curves[ck];
    if (curve.is_null()) curve = {{"generator_model", ck[0]}, {"strategy", ck[1]}, {"ordering", ck[2]}, {"points", nlohmann::json::array()}};
    curve["points"].push_back({{"level", level}, {"x", med->second}, {"values", values}});
  }
  for (auto& [k, c] : curves) series.push_back(std::move(c));
  nlohmann::json meds = nlohmann::json::object();
  for (const auto& [level, m] : medians) meds[std::to_string(level)] = m;
  return nlohmann::json{{"metrics", metrics_doc}, {"table1", table}, {"level_curves", series}, {"level_median_s", meds}};
}

void write_bundle(const std::filesystem::path& report_dir, const Bundle& bundle) {
  std::filesystem::create_directories(report_dir);
  write_text_atomic(report_dir / "table1.csv", bundle.table1);
  write_text_atomic(report_dir / "levels.csv", bundle.levels);
  write_text_atomic(report_dir / "stats.csv", bundle.stats);
  write_text_atomic(report_dir / "plot_data.json", bundle.plot_data);
}

}  // namespace polardial::report
