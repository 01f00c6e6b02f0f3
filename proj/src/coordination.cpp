#include "dmpc/coordination.hpp"

#include <string>

namespace dmpc {

void ingest(NeighborBuffer& buf, const Broadcast& b) {
  auto it = buf.latest.find(b.sender);
  if (it == buf.latest.end()) {
    buf.latest.emplace(b.sender, b);
    return;
  }
  if (b.instant > it->second.instant) it->second = b;  // ties keep the first
}

Vec assumed_sequence(const NeighborBuffer& buf, int j, int k_now, int N,
                     double mu_j) {
  auto it = buf.latest.find(j);
  if (it == buf.latest.end())
    throw ColdStartError("no broadcast received from neighbor " +
                         std::to_string(j));
  const Broadcast& b = it->second;
  const int delta = k_now - b.instant;
  if (delta < 0)
    throw std::invalid_argument("broadcast from the future");
  const int N_b = static_cast<int>(b.s_seq.size()) - 1;
  auto value_at = [&](int a) {
    if (a <= N_b) return b.s_seq(a);
    double v = b.s_seq(N_b);
    for (int i = N_b; i < a; ++i) v *= mu_j;  // geometric tail past the plan
    return v;
  };
  Vec shat(N);
  for (int t = 0; t < N; ++t) shat(t) = value_at(delta + t);
  return shat;
}

double coupling_cost(const Vec& s_seq, const std::map<int, Vec>& assumed,
                     const std::map<int, double>& rho) {
  double total = 0.0;
  for (const auto& [j, shat] : assumed) {
    const double r = rho.at(j);
    double acc = 0.0;
    for (int t = 0; t < shat.size(); ++t) {
      const double d = s_seq(t) - shat(t);
      acc += d * d;
    }
    total += r * acc;
  }
  return total;
}

}  // namespace dmpc
