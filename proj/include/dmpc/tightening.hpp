#pragma once
#include "dmpc/ingredients.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

struct InfeasibleTightening : std::runtime_error {
  int tau;
  explicit InfeasibleTightening(int tau_)
      : std::runtime_error("tightened state set empty at horizon step " +
                           std::to_string(tau_)),
        tau(tau_) {}
};

// Disturbance-propagation radius tau * eta * lambda_max(sqrt P) * (1+L_g)^(tau-1).
double lambda_radius(int tau, double eta, const AgentIngredients& ing);

// Pontryagin difference box (-) {||x||_P <= r}: each facet moves inward by the
// ball's support r * sqrt((P^-1)_jj); flags empty when an interval inverts.
BoxSet erode_box(const BoxSet& box, const WeightedBall& ball);

// Largest disturbance bound under which the horizon stays feasible:
// L_g (eps_r - eps) / (lambda_max(sqrt P) [(1+L_g)^N - 1]).
double admissible_eta(const AgentIngredients& ing, int N);

// Exact for box targets: every facet clears the ball's support eps_r*sqrt((P^-1)_jj).
bool check_inclusion(const WeightedBall& omega, const BoxSet& tightened);

// Tightened boxes for tau = 0..N; throws InfeasibleTightening on an empty set.
std::vector<BoxSet> tightened_boxes(const BoxSet& E, const AgentIngredients& ing,
                                    double eta, int N);

}  // namespace dmpc
