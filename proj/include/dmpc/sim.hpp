#pragma once
#include <map>
#include <string>
#include <vector>

#include "dmpc/config.hpp"
#include "dmpc/trace.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

struct HookTally {
  int checks = 0;
  int failures = 0;
};

struct AgentReport {
  int id = 0;
  int steps = 0;
  int solves = 0;            // OCP solve calls, recovery re-solves included
  int bootstraps = 0;        // infeasible solves before the first feasible one
  int solver_failures = 0;   // infeasible solves after a feasible incumbent
  int mode_flips = 0;
  int terminal_steps = 0;
  std::map<std::string, HookTally> hooks;
  std::vector<Vec> e_hist;       // actual error, length steps+1
  std::vector<double> s_hist;    // actual sync value, length steps+1
  std::vector<int> trigger_steps;
};

struct RunReport {
  std::vector<AgentReport> agents;
  int total_hook_failures = 0;
  bool aborted = false;          // strict mode stopped on a violated inequality
  std::string abort_reason;
  int steps_completed = 0;
};

// Closed-loop simulation: agents trigger per their schedules (all at k=0),
// solve or apply terminal feedback, broadcast sync plans (visible next step),
// then every agent applies its scheduled input under the true disturbed
// dynamics. Verification hooks run per the config's verification mode.
// trace may be null.
RunReport run(const Prepared& prep, TraceWriter* trace);

}  // namespace dmpc
