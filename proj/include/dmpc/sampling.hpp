#pragma once
#include <cstdint>
#include <random>

#include "dmpc/types.hpp"

namespace dmpc {

using Rng = std::mt19937_64;

// Distinct per-stream seeding so one agent's draw count never shifts another's.
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream);

// Uniform double in [0,1) built from the top 53 bits of one engine draw.
double uniform01(Rng& rng);

// Uniform direction on the unit sphere (Box-Muller pairs, normalized).
Vec sphere_direction(int dim, Rng& rng);

// Uniform sample in the Euclidean ball of given radius.
Vec ball_sample(int dim, double radius, Rng& rng);

// Van der Corput radical inverse; index is 1-based for a nonzero first value.
double halton(std::uint64_t index, std::uint32_t base);

// Low-discrepancy point in [0,1)^dim (bases 2,3,5,...).
Vec halton_point(std::uint64_t index, int dim);

Vec halton_in_box(std::uint64_t index, const BoxSet& box);

// Deterministic low-discrepancy fill of {||x||_P <= r}: rejection from the
// unit cube mapped through P^{-1/2}. `cursor` advances past rejected indices.
Vec halton_in_ellipsoid(std::uint64_t& cursor, const Mat& P_inv_sqrt, double r);

}  // namespace dmpc
