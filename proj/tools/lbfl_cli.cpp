// Command-line front end: run one experiment, run a defense x attack grid,
// or validate a config.

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lbfl/lbfl.hpp"

namespace fs = std::filesystem;

namespace {

std::string file_label(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  return out;
}

int cmd_validate(const std::string& config_path, std::optional<std::uint64_t> seed) {
  auto cfg = lbfl::parse_config(config_path);
  if (seed) cfg.seed = *seed;
  std::cout << lbfl::to_json(cfg).dump(2) << "\n"
            << "config_hash=" << lbfl::hex64(lbfl::config_hash(cfg)) << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, std::string out_path, std::optional<std::uint64_t> seed) {
  auto cfg = lbfl::parse_config(config_path);
  if (seed) cfg.seed = *seed;
  if (out_path.empty()) out_path = cfg.output;
  if (out_path.empty()) throw lbfl::ConfigError("no output path: pass --out or set 'output' in the config");

  const auto started = std::chrono::steady_clock::now();
  auto result = lbfl::run_experiment(cfg);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;

  const fs::path csv_path(out_path);
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  auto summary_path = csv_path;
  summary_path.replace_extension(".summary.json");
  lbfl::write_file_atomic(csv_path, lbfl::results_csv(cfg, result.reports));
  lbfl::write_file_atomic(summary_path, lbfl::run_summary(cfg, result).dump(2) + "\n");

  const double post = lbfl::post_attack_mean_accuracy(result.reports, cfg.attack.start_round);
  std::cerr << "wrote " << csv_path.string() << " (" << result.reports.size() << " rounds, post-attack accuracy "
            << post << ", " << elapsed.count() << " s)\n";
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
             std::optional<std::size_t> repeats) {
  if (out_dir.empty()) throw lbfl::ConfigError("grid needs --out <directory>");
  const auto cells = lbfl::parse_grid(config_path, {seed, repeats});
  fs::create_directories(out_dir);

  auto on_run = [&](const lbfl::GridCell& cell, std::size_t, const lbfl::ExperimentConfig& cfg,
                    const lbfl::ExperimentResult& result) {
    const auto name = file_label(cell.defense) + "__" + file_label(cell.attack) + "__seed" + std::to_string(cfg.seed);
    lbfl::write_file_atomic(fs::path(out_dir) / (name + ".csv"), lbfl::results_csv(cfg, result.reports));
    std::cerr << "  " << cell.defense << " / " << cell.attack << " seed " << cfg.seed << ": "
              << lbfl::post_attack_mean_accuracy(result.reports, cfg.attack.start_round) << "\n";
  };
  const auto rows = lbfl::run_grid(cells, on_run);

  lbfl::write_file_atomic(fs::path(out_dir) / "summary.csv", lbfl::grid_summary_csv(rows));
  lbfl::write_file_atomic(fs::path(out_dir) / "summary.json", lbfl::grid_summary_json(rows).dump(2) + "\n");

  int failed = 0;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++failed;
      std::cerr << "cell " << r.defense << " / " << r.attack << " failed: " << r.error << "\n";
    }
  }
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with loss-based client filtering"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;

  auto* run = app.add_subcommand("run", "Run one experiment and write per-round results");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_path, "Results CSV path (summary goes next to it)");
  run->add_option("--seed", seed, "Override the master seed");

  auto* grid = app.add_subcommand("grid", "Run a defense x attack grid with repeats");
  grid->add_option("--config", config_path, "Grid config (JSON)")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", out_path, "Output directory")->required();
  grid->add_option("--seed", seed, "Override the base master seed");
  grid->add_option("--repeats", repeats, "Override the number of repeats per cell");

  auto* validate = app.add_subcommand("validate", "Parse and validate a config, print the resolved form");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  validate->add_option("--seed", seed, "Override the master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_path, seed);
    if (*grid) return cmd_grid(config_path, out_path, seed, repeats);
    if (*validate) return cmd_validate(config_path, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
