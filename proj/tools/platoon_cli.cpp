// Experiment runner: platoon run <config-file> [--out DIR] [--seed N]

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "platoon/errors.hpp"
#include "platoon/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Platoon traffic model experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run one experiment described by a config file");
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  run_cmd->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory (overrides experiment.out)");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Random seed (overrides experiment.seed)");

  CLI11_PARSE(app, argc, argv);

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();

  try {
    platoon::ExperimentConfig config = platoon::parse_config(text.str());
    if (*seed_opt) config.seed = seed;
    if (*out_opt) config.out_dir = out_dir;
    const auto summary = platoon::run(config, config.out_dir);
    platoon::write_summary(std::cout, summary);
    std::cout << "wall_seconds = " << summary.wall_seconds << "\n";
    return summary.passed() ? 0 : 1;
  } catch (const platoon::ConfigError& e) {
    std::cerr << "config errors in " << config_path << ":\n";
    for (const auto& msg : e.errors()) std::cerr << "  " << msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
