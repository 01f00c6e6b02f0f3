#pragma once
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "dmpc/config.hpp"
#include "dmpc/sim.hpp"

namespace dmpc {

struct RunOptions {
  std::string config_path;  // structured config file; empty selects a fixture
  std::string fixture;      // "sec5", "sec5-paper-gains", "suite"; default sec5
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> eta;
  bool strict = false;
  std::string out_dir;  // empty keeps the config's out_dir
};

// Loads the config or fixture and applies the command-line overrides.
// Throws ConfigError on an unknown fixture or unreadable file.
ExperimentConfig resolve_config(const RunOptions& opt);

// Copy of base with per-agent initial errors and sync offsets drawn from
// seed-keyed streams; used for multi-seed property sweeps.
ExperimentConfig suite_instance(const ExperimentConfig& base,
                                std::uint64_t seed);

// Exit codes: 0 clean, 2 config rejected, 3 aborted on a strict violation.
int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err);

// Prints the admissible disturbance bound, terminal-region validation and
// tightened-set inclusion per agent; nonzero when any gate fails.
int cmd_verify(const RunOptions& opt, std::ostream& out, std::ostream& err);

int cmd_plotdata(const std::string& trace_path, const std::string& out_dir,
                 std::ostream& out, std::ostream& err);

}  // namespace dmpc
