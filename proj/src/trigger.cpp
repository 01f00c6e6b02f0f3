#include "dmpc/trigger.hpp"

#include <algorithm>
#include <cmath>

namespace dmpc {

namespace {
constexpr double kLipschitzFloor = 1e-14;  // analytic-limit switch
}

TriggerConstants make_trigger_constants(double sigma, double eta,
                                        const AgentIngredients& ing, int N) {
  if (!(sigma > 0.0 && sigma < 1.0))
    throw ConfigError("triggering performance factor must lie in (0,1)");
  if (eta < 0.0) throw ConfigError("disturbance bound must be nonnegative");
  TriggerConstants tc;
  tc.sigma = sigma;
  tc.eta = eta;
  tc.nu_tab.assign(N + 1, 0.0);
  tc.varpi_tab.assign(N + 1, 0.0);
  tc.sigma_tab.assign(N + 1, 0.0);
  tc.tau_tab.assign(N + 1, 0.0);
  for (int m = 1; m <= N; ++m) {
    const double nu = std::pow(1.0 + ing.L_g, N - m);
    tc.nu_tab[m] = nu;
    tc.varpi_tab[m] =
        ing.L_g > kLipschitzFloor ? (nu - 1.0) / ing.L_g : double(N - m);
    const double sig = std::pow(1.0 + ing.L_kappa, m - 1);
    tc.sigma_tab[m] = sig;
    tc.tau_tab[m] =
        ing.L_kappa > kLipschitzFloor ? (sig - 1.0) / ing.L_kappa : double(m - 1);
  }
  return tc;
}

const char* to_string(Limiting l) {
  switch (l) {
    case Limiting::Feasibility: return "feasibility";
    case Limiting::StageDecrease: return "stage-decrease";
    case Limiting::Fallback: return "fallback";
  }
  return "unknown";
}

double upsilon(int m, const AgentIngredients& ing, double eta, int N) {
  const double ratio = ing.lambda_min_Qstar / ing.lambda_max_P;
  if (ratio >= 1.0)
    throw ConfigError("contraction factor must lie in (0,1)");
  const double c = 1.0 - ratio;
  double x;
  if (ing.L_g > kLipschitzFloor) {
    x = (eta * ing.lambda_max_sqrtP / ing.L_g) *
        (std::pow(1.0 + ing.L_g, N) - std::pow(1.0 + ing.L_g, N - m));
  } else {
    x = eta * ing.lambda_max_sqrtP * m;
  }
  const double radius = ing.eps + x;
  return std::pow(c, m) * radius * radius - ing.eps * ing.eps;
}

double psi(int m, const AgentIngredients& ing, int N) {
  const double nu = std::pow(1.0 + ing.L_g, N - m);
  const double varpi =
      ing.L_g > kLipschitzFloor ? (nu - 1.0) / ing.L_g : double(N - m);
  const double sig = std::pow(1.0 + ing.L_kappa, m - 1);
  const double tau =
      ing.L_kappa > kLipschitzFloor ? (sig - 1.0) / ing.L_kappa : double(m - 1);
  return varpi * ing.L_Q + nu * tau * ing.L_Qstar + nu * sig * ing.L_P;
}

double alpha(int m, double predicted_e_norm, const AgentIngredients& ing,
             double eta) {
  return std::max(0.0,
                  predicted_e_norm - m * std::pow(1.0 + ing.L_g, m - 1) * eta);
}

TriggerDecision decide(const PredictedSolution& sol, const Vec& current_e,
                       const TriggerConstants& tc, const AgentIngredients& ing,
                       int N, int current_instant) {
  (void)current_e;  // the decision reads the fresh predicted sequence
  TriggerDecision d;
  d.upsilon_values.resize(N);
  d.psi_values.resize(N);
  for (int m = 1; m <= N; ++m) {
    d.upsilon_values[m - 1] = upsilon(m, ing, tc.eta, N);
    d.psi_values[m - 1] = psi(m, ing, N);
  }

  auto decrease_ok = [&](int m) {
    const double en = sol.e_seq.row(m - 1).norm();
    const double a = alpha(m, en, ing, tc.eta);
    const Vec u = sol.u_seq.row(m - 1).transpose();
    return d.psi_values[m - 1] * tc.eta <=
           tc.sigma * (ing.lambda_min_Q * a * a + weighted_sq(u, ing.R));
  };

  // Largest prefix lengths for each condition family.
  int m_f = 0;
  while (m_f < N && d.upsilon_values[m_f] <= 0.0) ++m_f;
  int m_s = 1;
  while (m_s < N && decrease_ok(m_s + 1)) ++m_s;

  d.m = std::max(1, std::min(m_f, m_s));
  d.next_instant = current_instant + d.m;
  if (d.m == 1) {
    d.limiting_condition = Limiting::Fallback;
  } else if (d.m == N) {
    d.limiting_condition = Limiting::Feasibility;
  } else {
    d.limiting_condition =
        m_f <= m_s ? Limiting::Feasibility : Limiting::StageDecrease;
  }
  d.literal_m =
      decrease_ok(1) ? 1 : std::min(N, std::max(1, std::min(m_f, m_s)));
  return d;
}

}  // namespace dmpc
