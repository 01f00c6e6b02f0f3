#pragma once
#include <string>
#include <utility>
#include <vector>

#include "dmpc/dynamics.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

struct SynthesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Offline per-agent constants used by the controller and the trigger.
struct AgentIngredients {
  Mat K;       // terminal feedback, u = K e
  Mat P;       // terminal weight (SPD)
  Mat Q, R;    // stage weights
  Mat Q_star;  // Q + K^T R K
  double eps = 0.0, eps_r = 0.0;
  double L_g = 0.0, L_kappa = 0.0;
  double L_Q = 0.0, L_Qstar = 0.0, L_P = 0.0;
  // cached spectral quantities
  double lambda_max_sqrtP = 0.0, lambda_min_Qstar = 0.0;
  double lambda_max_P = 0.0, lambda_min_Q = 0.0;

  void refresh_spectral();
};

struct ValidationIssue {
  std::string check;  // "input", "invariance", "decrease"
  Vec e;
  double violation = 0.0;
};

struct ValidationReport {
  int samples = 0;
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

// (G, H) = Jacobians of f at the origin by central differences, step 1e-6.
std::pair<Mat, Mat> linearize(const Model& m, const Vec2& ur);

// LQR gain plus the Lyapunov solve Gc^T P Gc - P = -(Q + K^T R K)(1+margin).
// Throws SynthesisError when (G,H) is not stabilizable or the postcondition
// (Gc Schur, P SPD, decrease holds) fails.
std::pair<Mat, Mat> synthesize_terminal(const Mat& G, const Mat& H, const Mat& Q,
                                        const Mat& R, double margin = 0.05);

// Samples {||e||_P <= eps_r} and checks (a) Ke in U, (b) ||f(e,Ke)||_P <= eps_r,
// (c) ||f(e,Ke)||_P^2 - ||e||_P^2 <= -||e||_Qstar^2 on the nonlinear model.
ValidationReport validate_terminal_region(const Model& m,
                                          const AgentIngredients& ing,
                                          const Vec2& ur, const BoxSet& U,
                                          int samples, bool parallel = true);

// L_M = 2 lambda_max(M) sup||e||; sets ing.L_Q, ing.L_Qstar, ing.L_P.
void weighted_norm_constants(AgentIngredients& ing, double sup_norm);
void weighted_norm_constants(AgentIngredients& ing, const BoxSet& state_set);

// Solves the discrete Riccati equation by value iteration (relative tolerance).
Mat solve_dare(const Mat& G, const Mat& H, const Mat& Q, const Mat& R);

// Solves Gc^T X Gc - X = -S for symmetric S via the n^2 x n^2 Kronecker system.
Mat solve_dlyap(const Mat& Gc, const Mat& S);

double spectral_radius(const Mat& A);

}  // namespace dmpc
