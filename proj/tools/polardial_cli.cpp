// Command-line front end: one subcommand per pipeline stage plus `run`.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "polardial/config.hpp"
#include "polardial/error.hpp"
#include "polardial/runner.hpp"

namespace {

using polardial::config::ExperimentConfig;
using polardial::runner::Stage;

struct Globals {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  bool resume = false;
  bool mock = false;
  std::string log_level = "info";
};

ExperimentConfig load(const Globals& g) {
  polardial::config::LoadOptions o;
  o.seed = g.seed;
  if (g.mock) o.mock = true;
  if (!g.run_dir.empty()) o.run_dir = std::filesystem::absolute(g.run_dir);
  if (!g.config_path.empty()) return polardial::config::load_config(g.config_path, o);
  if (!g.preset.empty()) return polardial::config::load_preset(g.preset, o);
  throw polardial::ConfigError("pass --config <file> or --preset <name>");
}

int report_manifest(const polardial::runner::RunManifest& m, const ExperimentConfig& cfg) {
  for (const auto& s : m.stages) {
    if (s.status == "not_run") continue;
    std::printf("%-10s %-8s %8.2fs %s\n", std::string(polardial::runner::to_string(s.stage)).c_str(), s.status.c_str(),
                s.seconds, s.counts.dump().c_str());
  }
  std::printf("run_dir  %s\nstatus   %s\ndigest   %s\n", cfg.run_dir.string().c_str(), m.status.c_str(),
              m.digest.c_str());
  if (m.failing_stage) {
    std::fprintf(stderr, "stage %s failed: %s\n", m.failing_stage->c_str(), m.error.c_str());
    return 1;
  }
  return 0;
}

int run(const Globals& g, const std::vector<Stage>& stages) {
  const ExperimentConfig cfg = load(g);
  polardial::runner::RunOptions options;
  options.resume = g.resume;
  if (cfg.sweep) {
    if (stages.size() != polardial::runner::kStages.size()) {
      throw polardial::ConfigError("sweep configs run all stages; use the run subcommand");
    }
    int rc = 0;
    for (const auto& sub : polardial::config::expand_sweep(cfg)) {
      rc = report_manifest(polardial::runner::run_experiment(sub, options), sub);
      if (rc != 0) break;
    }
    return rc;
  }
  return report_manifest(polardial::runner::run_stages(cfg, stages, options), cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona-polarity dialogue experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "YAML or JSON experiment config");
  app.add_option("--preset", g.preset, "built-in preset (instead of --config)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--run-dir", g.run_dir, "override the run directory");
  app.add_flag("--resume", g.resume, "skip stages whose outputs are up to date");
  app.add_flag("--mock", g.mock, "use offline mock backends");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error")->capture_default_str();

  std::vector<Stage> selected;
  for (Stage s : polardial::runner::kStages) {
    auto* sub = app.add_subcommand(std::string(polardial::runner::to_string(s)),
                                   "run the " + std::string(polardial::runner::to_string(s)) + " stage");
    sub->callback([&selected, s] { selected = {s}; });
  }
  app.add_subcommand("run", "run every stage in order")->callback([&selected] {
    selected.assign(polardial::runner::kStages.begin(), polardial::runner::kStages.end());
  });
  bool list_only = false;
  auto* presets = app.add_subcommand("presets", "print preset names, or one preset as JSON");
  std::string preset_name;
  presets->add_option("name", preset_name);
  presets->callback([&list_only] { list_only = true; });

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (list_only) {
      if (preset_name.empty()) {
        for (const auto& n : polardial::config::preset_names()) std::cout << n << "\n";
      } else {
        std::cout << polardial::config::preset_document(preset_name).dump(2) << "\n";
      }
      return 0;
    }
    return run(g, selected);
  } catch (const polardial::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
