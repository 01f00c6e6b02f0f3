#pragma once
#include <map>
#include <optional>
#include <string>

#include "dmpc/dynamics.hpp"
#include "dmpc/ingredients.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

struct DivergedRollout : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SolverStatus { Converged, MaxIter, Infeasible };
const char* to_string(SolverStatus s);

// One finite-horizon problem instance at a trigger.
struct OcpProblem {
  const Model* model = nullptr;
  const AgentIngredients* ing = nullptr;
  int N = 0;
  double T = 0.0;
  Vec e0;       // measured error at the trigger instant
  double s0 = 0.0;
  std::map<int, Vec> assumed;  // neighbor id -> assumed sync sequence, length N
  std::map<int, double> rho;   // neighbor id -> coupling weight
  std::vector<Vec2> u_r;       // reference inputs, length N
  std::optional<double> phi;   // stability bound; absent at the first trigger
  std::vector<BoxSet> boxes;   // tightened state boxes, tau = 0..N
  BoxSet U;                    // input box
  Vec Y, Z;                    // sync-law weights
};

struct PredictedSolution {
  Mat u_seq;  // N x nu
  Mat e_seq;  // (N+1) x nx, nominal rollout of u_seq from e0
  Vec s_seq;  // N+1
  double stage_cost = 0.0;     // H: stage + terminal quadratics
  double coupling_cost = 0.0;  // rho-weighted sync mismatch
  double total = 0.0;          // J = H + coupling
  SolverStatus solver_status = SolverStatus::MaxIter;
  int iters = 0;
  double kkt = 0.0;
  std::string most_violated;  // named constraint when infeasible
};

struct CostParts {
  double J = 0.0, H = 0.0, coupling = 0.0;
};

// Nominal rollout of a control sequence; throws DivergedRollout on non-finite.
void rollout(const OcpProblem& p, const Mat& u_seq, Mat& e_seq, Vec& s_seq);

CostParts build_cost(const OcpProblem& p, const Mat& u_seq);

// Constraint residuals of (state boxes, terminal set, input box, stability
// bound) for a given sequence; worst violation and its name.
struct FeasibilityCheck {
  bool ok = true;
  std::string worst;
  double violation = 0.0;
};
FeasibilityCheck check_candidate(const OcpProblem& p, const Mat& u_seq);

// Sequential quadratic programming, single shooting, l1 exact penalty on the
// nonlinear rows, trust region; KKT <= 1e-7 or 200 iterations; deterministic.
PredictedSolution solve(const OcpProblem& p, const Mat& warm_u);

// Shift-by-m candidate: prev inputs from tau+m, terminal feedback for the tail,
// rolled from the next problem's measured state.
Mat warm_start_from(const PredictedSolution& prev, int m, const OcpProblem& next);

// phi = prev_H - ||e||_Q^2 - ||u||_R^2 + psi(m) eta
double phi_bound(const Vec& prev_actual_e, const Vec& prev_u_applied,
                 double prev_H, double psi_m_eta, const AgentIngredients& ing);

}  // namespace dmpc
