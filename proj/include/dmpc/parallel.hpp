#pragma once
#include <cstdint>

#ifndef DMPC_NO_OPENMP
#include <omp.h>
#endif

namespace dmpc {

inline bool openmp_enabled() {
#ifndef DMPC_NO_OPENMP
  return true;
#else
  return false;
#endif
}

// Data-parallel loop; bodies must write only to disjoint per-index slots so
// serial and parallel execution produce identical results.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifndef DMPC_NO_OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) body(i);
#else
  for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

// Serial reference with identical iteration semantics, kept for testing.
template <class F>
void serial_for(std::int64_t n, F&& body) {
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace dmpc
