#pragma once
#include <vector>

#include "dmpc/ingredients.hpp"
#include "dmpc/ocp.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

// Per-agent scheduler constants with the per-m tables precomputed once.
struct TriggerConstants {
  double sigma = 0.0;  // performance factor in (0,1)
  double eta = 0.0;    // disturbance bound
  // Tables indexed by m in [1, N]; entry 0 unused.
  std::vector<double> nu_tab, varpi_tab, sigma_tab, tau_tab;
};

TriggerConstants make_trigger_constants(double sigma, double eta,
                                        const AgentIngredients& ing, int N);

enum class Limiting { Feasibility, StageDecrease, Fallback };
const char* to_string(Limiting l);

struct TriggerDecision {
  int m = 1;
  int next_instant = 0;
  std::vector<double> upsilon_values;  // index m-1, m in [1, N]
  std::vector<double> psi_values;
  Limiting limiting_condition = Limiting::Fallback;
  int literal_m = 1;  // one-step-indicator reading, recorded for the trace
};

// c^m (eps + x(m))^2 - eps^2 with c = 1 - lmin(Q*)/lmax(P) and
// x(m) = (eta lmax(sqrtP)/L_g)[(1+L_g)^N - (1+L_g)^{N-m}].
double upsilon(int m, const AgentIngredients& ing, double eta, int N);

// varpi L_Q + nu tau L_Q* + nu sigma L_P with nu = (1+L_g)^{N-m},
// varpi = (nu-1)/L_g, sigma = (1+L_k)^{m-1}, tau = (sigma-1)/L_k.
double psi(int m, const AgentIngredients& ing, int N);

// max{0, ||e~(m-1|k)|| - m (1+L_g)^{m-1} eta}
double alpha(int m, double predicted_e_norm, const AgentIngredients& ing,
             double eta);

// Largest m* in [1,N] with Upsilon(m') <= 0 for all m' in [1,m*] and
// psi(m') eta <= sigma [lmin(Q) alpha(m')^2 + ||u*(m'-1|k)||_R^2] for all
// m' in [2,m*]; m = 1 is the unconditional fallback.
TriggerDecision decide(const PredictedSolution& sol, const Vec& current_e,
                       const TriggerConstants& tc, const AgentIngredients& ing,
                       int N, int current_instant);

}  // namespace dmpc
