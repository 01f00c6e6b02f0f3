#include "dmpc/dynamics.hpp"

#include <cmath>

#include "dmpc/parallel.hpp"
#include "dmpc/sampling.hpp"

namespace dmpc {

Vec2 PhasorPath::position(double s) const {
  Vec2 p = Vec2::Zero();
  for (const auto& t : terms) {
    double a = t.rate * s + t.phase;
    p[0] += t.amp * std::cos(a);
    p[1] += t.amp * std::sin(a);
  }
  return p;
}

Vec2 reference_inputs(const PhasorPath& path, double s) {
  const double h = path.h_s;
  Vec2 pm = path.position(s - h), p0 = path.position(s), pp = path.position(s + h);
  Vec2 d1 = (pp - pm) / (2.0 * h);
  Vec2 d2 = (pp - 2.0 * p0 + pm) / (h * h);
  double v = d1.norm();
  if (v <= 1e-8)
    throw SingularReferenceError("reference path speed is zero at s=" +
                                 std::to_string(s));
  double w = (d1[0] * d2[1] - d1[1] * d2[0]) / (v * v);
  return Vec2(v, w);
}

Vec Model::step_nominal(const Vec& e, const Vec& u, const Vec2& ur) const {
  return f(e, u, ur);
}

Vec Model::step_true(const Vec& e, const Vec& u, const Vec2& ur,
                     const Vec& d) const {
  return f(e, u, ur) + d;
}

Vec UnicycleModel::f(const Vec& e, const Vec& u, const Vec2& ur) const {
  const double w = ur[1] - u[1];
  Vec out(3);
  out[0] = e[0] + T * (w * e[1] + u[0]);
  out[1] = e[1] + T * (-w * e[0] + ur[0] * std::sin(e[2]));
  out[2] = e[2] + T * u[1];
  return out;
}

void UnicycleModel::jacobians(const Vec& e, const Vec& u, const Vec2& ur,
                              Mat& A, Mat& B) const {
  const double w = ur[1] - u[1];
  A = Mat::Identity(3, 3);
  A(0, 1) = T * w;
  A(1, 0) = -T * w;
  A(1, 2) = T * ur[0] * std::cos(e[2]);
  B = Mat::Zero(3, 2);
  B(0, 0) = T;
  B(0, 1) = -T * e[1];
  B(1, 1) = T * e[0];
  B(2, 1) = T;
}

double step_sync(double s, double T, const Vec& Y, const Vec& Z, const Vec& u,
                 const Vec& ur) {
  return s + T * (Y.dot(u) + Z.dot(ur));
}

double max_lipschitz_ratio(const Model& m, const BoxSet& E, const BoxSet& U,
                           const Vec2& ur, int pairs, bool parallel) {
  std::vector<double> ratio(pairs, 0.0);
  auto body = [&](std::int64_t i) {
    // three coupled low-discrepancy streams, offset to decorrelate
    Vec e1 = halton_in_box(static_cast<std::uint64_t>(3 * i + 1), E);
    Vec e2 = halton_in_box(static_cast<std::uint64_t>(3 * i + 2) + 7919, E);
    Vec u = halton_in_box(static_cast<std::uint64_t>(3 * i + 3) + 104729, U);
    double de = (e1 - e2).norm();
    if (de < 1e-12) return;
    Vec g1 = m.f(e1, u, ur) - e1;
    Vec g2 = m.f(e2, u, ur) - e2;
    ratio[i] = (g1 - g2).norm() / de;
  };
  if (parallel)
    parallel_for(pairs, body);
  else
    serial_for(pairs, body);
  double mx = 0.0;
  for (double r : ratio) mx = std::max(mx, r);
  return mx;
}

}  // namespace dmpc
