#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmpc/dynamics.hpp"
#include "dmpc/ingredients.hpp"
#include "dmpc/trigger.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

enum class VerifyMode { Off, Logging, Strict };
const char* to_string(VerifyMode m);

struct IngredientSpec {
  enum class Mode { Synthesize, Pinned } mode = Mode::Synthesize;
  double margin = 0.05;  // synthesize: decrease margin multiplier on Q*
  Mat P, K;              // pinned: terminal cost and gain taken as given
};

struct AgentConfig {
  int id = 0;
  std::vector<PhasorTerm> path;
  double h_s = 1e-4;
  Mat Q, R;
  std::map<int, double> rho;  // coupling weight per neighbor
  std::map<int, double> mu;   // extrapolation factor per neighbor
  double sigma = 0.5;
  double eps = 0.0, eps_r = 0.0;
  double eta = 0.0;
  bool eta_admissible = false;  // "admissible": resolve to the computed bound
  double L_g = 0.0, L_kappa = 0.0;
  Vec e0;
  double s0 = 0.0;
  BoxSet E, U;
  Vec Y, Z;
  IngredientSpec ingredients;
};

struct ExperimentConfig {
  int schema = 1;
  double T = 0.2;
  int N = 6;
  int steps = 100;
  std::uint64_t seed = 1;
  std::optional<double> eta_override;  // global override, applied after gates
  double disturbance_scale = 1.0;
  VerifyMode verification = VerifyMode::Logging;
  std::string out_dir = "out";
  std::map<int, std::vector<int>> adjacency;
  std::vector<AgentConfig> agents;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Bundled three-vehicle experiment: synthesized terminal ingredients.
ExperimentConfig builtin_sec5();
// Same experiment with the published terminal cost/gain pinned (no synthesis);
// rejected by the validation gates, kept as the negative fixture.
ExperimentConfig builtin_sec5_paper_gains();
// Property-suite variant: tighter terminal radius, disturbance at the
// admissible bound, strict verification.
ExperimentConfig builtin_suite();

struct PreparedAgent {
  AgentConfig cfg;  // eta resolved to its numeric value
  UnicycleModel model;
  Vec2 ur0;  // reference inputs at the initial sync value
  AgentIngredients ing;
  TriggerConstants trigger;
  std::vector<BoxSet> boxes;  // tightened state boxes, tau = 0..N
  double admissible = 0.0;    // disturbance bound admitted by the ingredients
};

struct Prepared {
  ExperimentConfig cfg;
  std::vector<PreparedAgent> agents;
  std::vector<std::string> warnings;  // non-fatal gate findings (logging mode)
};

// Validates and assembles everything the simulator needs. Throws ConfigError
// with a message naming the failed check and the agent.
Prepared prepare(const ExperimentConfig& cfg);

}  // namespace dmpc
