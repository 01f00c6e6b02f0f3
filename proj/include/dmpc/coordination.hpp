#pragma once
#include <map>
#include <stdexcept>

#include "dmpc/types.hpp"

namespace dmpc {

struct ColdStartError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Broadcast {
  int sender = -1;
  int instant = 0;  // trigger instant the prediction starts at
  Vec s_seq;        // N+1 predicted sync values
};

// Latest broadcast per neighbor; newer instants win, ties keep the first.
struct NeighborBuffer {
  std::map<int, Broadcast> latest;
  bool has(int j) const { return latest.count(j) != 0; }
};

void ingest(NeighborBuffer& buf, const Broadcast& b);

// Time-aligned, mu-extrapolated assumed sequence of length N:
// shat(tau) = s*_j(Delta+tau) while Delta+tau <= N, then shat(tau) =
// mu * shat(tau-1). Throws ColdStartError when nothing from j was received.
Vec assumed_sequence(const NeighborBuffer& buf, int j, int k_now, int N,
                     double mu_j);

// Sum over neighbors and tau in [0, N-1] of rho_j (s(tau) - shat_j(tau))^2.
double coupling_cost(const Vec& s_seq, const std::map<int, Vec>& assumed,
                     const std::map<int, double>& rho);

}  // namespace dmpc
