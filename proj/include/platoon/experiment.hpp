#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "platoon/disturbance.hpp"
#include "platoon/lyapunov.hpp"
#include "platoon/macro.hpp"
#include "platoon/micro_sim.hpp"
#include "platoon/model.hpp"

namespace platoon {

enum class ExperimentKind {
  micro_sim,
  closed_form_check,
  lyapunov_audit,
  amplification_sweep,
  macro_chars,
  macro_fd,
  micro_macro_bridge,
};

const char* to_string(ExperimentKind kind);

/// How the micro initial state is produced.
struct InitialSpec {
  enum class Source { example1_random, compliant, explicit_state } source = Source::example1_random;
  std::vector<double> speeds;    // compliant / explicit; empty compliant speeds are drawn from the seed
  std::vector<double> spacings;  // explicit only
  double extra_gap = 1.0;        // compliant only
};

struct MacroProfileSpec {
  enum class Kind { example3, constant, bump } kind = Kind::example3;
  double rho_base = 0.1, rho_amp = 0.3125;  // density bump, power 2
  double v_base = 1.0, v_amp = -0.125;      // speed bump, power 3
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::micro_sim;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  ModelParams model = ModelParams::example1();
  IntegratorConfig integrator;
  InitialSpec initial;
  double closed_form_tolerance = 1e-8;

  LyapunovConfig lyapunov;
  int claim_states = 1000;
  std::vector<int> claim_sizes{2, 4, 6};
  int audit_csv_stride = 100;  // every k-th audit row goes to audit.csv

  SweepGrid sweep_grid{{0.1}, {10, 15, 20, 25}, {Controller::inviscid, Controller::ftl}, -2.5};
  SweepSettings sweep_settings;
  FtLParams ftl;

  MacroParams macro = MacroParams::example3();
  MacroProfileSpec profiles;
  DecayAuditConfig chars;
  FdConfig fd;
  BridgeConfig bridge;

  /// Sorted `section.key=value` lines of the parsed text; hashed with the seed.
  std::string canonical;
};

/// FNV-1a (64 bit) over the canonical listing and the seed.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Parses the INI text. Throws ConfigError listing every malformed value,
/// unknown section or key, and violated invariant.
ExperimentConfig parse_config(std::string_view text);

struct AuditResult {
  std::string name;
  bool passed = false;
  double margin = 0;  // signed; >= 0 means satisfied
  std::string detail;
};

struct RunSummary {
  ExperimentKind kind = ExperimentKind::micro_sim;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<AuditResult> audits;
  std::vector<std::string> files;  // written, relative to the run directory
  double wall_seconds = 0;         // reported on stdout, never written

  bool passed() const;
};

/// Runs the experiment and writes its CSVs plus summary.txt into out_dir.
RunSummary run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Text form of summary.txt (no timing, so reruns are byte-identical).
void write_summary(std::ostream& os, const RunSummary& summary);

/// Builds the density and speed profiles named by the config.
SmoothProfile make_density_profile(const MacroProfileSpec& spec);
SmoothProfile make_speed_profile(const MacroProfileSpec& spec);

}  // namespace platoon
