#include "dmpc/sampling.hpp"

#include <cmath>

namespace dmpc {

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) { return (rng() >> 11) * 0x1.0p-53; }

Vec sphere_direction(int dim, Rng& rng) {
  Vec g(dim);
  int i = 0;
  while (i < dim) {
    // Box-Muller; u1 > 0 guaranteed by the offset
    double u1 = (uniform01(rng) + 0x1.0p-54);
    double u2 = uniform01(rng);
    double rad = std::sqrt(-2.0 * std::log(u1));
    g[i++] = rad * std::cos(2.0 * M_PI * u2);
    if (i < dim) g[i++] = rad * std::sin(2.0 * M_PI * u2);
  }
  double n = g.norm();
  if (n == 0.0) {
    g.setZero();
    g[0] = 1.0;
    return g;
  }
  return g / n;
}

Vec ball_sample(int dim, double radius, Rng& rng) {
  Vec dir = sphere_direction(dim, rng);
  double r = radius * std::pow(uniform01(rng), 1.0 / dim);
  return r * dir;
}

double halton(std::uint64_t index, std::uint32_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

Vec halton_point(std::uint64_t index, int dim) {
  static const std::uint32_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19,
                                         23, 29, 31, 37, 41, 43, 47, 53};
  Vec p(dim);
  for (int d = 0; d < dim; ++d) p[d] = halton(index, primes[d]);
  return p;
}

Vec halton_in_box(std::uint64_t index, const BoxSet& box) {
  Vec u = halton_point(index, box.dim());
  return box.lo.array() + u.array() * (box.hi - box.lo).array();
}

Vec halton_in_ellipsoid(std::uint64_t& cursor, const Mat& P_inv_sqrt, double r) {
  const int d = static_cast<int>(P_inv_sqrt.rows());
  for (;;) {
    Vec u = halton_point(cursor++, d);
    Vec y = 2.0 * u.array() - 1.0;
    if (y.squaredNorm() <= 1.0) return r * (P_inv_sqrt * y);
  }
}

}  // namespace dmpc
