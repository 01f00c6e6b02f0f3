#include "dmpc/tightening.hpp"

#include <cmath>

namespace dmpc {

double lambda_radius(int tau, double eta, const AgentIngredients& ing) {
  if (tau <= 0) return 0.0;
  return tau * eta * ing.lambda_max_sqrtP * std::pow(1.0 + ing.L_g, tau - 1);
}

BoxSet erode_box(const BoxSet& box, const WeightedBall& ball) {
  BoxSet out = box;
  if (box.empty) return out;
  if (ball.r == 0.0) return out;
  Mat Pinv = ball.P.llt().solve(Mat::Identity(ball.P.rows(), ball.P.cols()));
  for (int j = 0; j < box.dim(); ++j) {
    double support = ball.r * std::sqrt(Pinv(j, j));
    out.lo[j] = box.lo[j] + support;
    out.hi[j] = box.hi[j] - support;
    if (out.lo[j] > out.hi[j]) out.empty = true;
  }
  return out;
}

double admissible_eta(const AgentIngredients& ing, int N) {
  return ing.L_g * (ing.eps_r - ing.eps) /
         (ing.lambda_max_sqrtP * (std::pow(1.0 + ing.L_g, N) - 1.0));
}

bool check_inclusion(const WeightedBall& omega, const BoxSet& tightened) {
  if (tightened.empty) return false;
  if (omega.r == 0.0) return true;
  Mat Pinv = omega.P.llt().solve(Mat::Identity(omega.P.rows(), omega.P.cols()));
  for (int j = 0; j < tightened.dim(); ++j) {
    double support = omega.r * std::sqrt(Pinv(j, j));
    if (support > tightened.hi[j] || -support < tightened.lo[j]) return false;
  }
  return true;
}

std::vector<BoxSet> tightened_boxes(const BoxSet& E, const AgentIngredients& ing,
                                    double eta, int N) {
  std::vector<BoxSet> out;
  out.reserve(N + 1);
  for (int tau = 0; tau <= N; ++tau) {
    BoxSet b = erode_box(E, {ing.P, lambda_radius(tau, eta, ing)});
    if (b.empty) throw InfeasibleTightening(tau);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace dmpc
