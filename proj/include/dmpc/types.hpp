#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Configuration rejected at load time; the message names the failed check.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis-aligned box, componentwise lo <= hi; erosion may flag it empty.
struct BoxSet {
  Vec lo, hi;
  bool empty = false;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& x, double tol = 0.0) const {
    if (empty) return false;
    for (int j = 0; j < dim(); ++j)
      if (x[j] < lo[j] - tol || x[j] > hi[j] + tol) return false;
    return true;
  }

  // Symmetric box [-half, half] componentwise.
  static BoxSet symmetric(const Vec& half) {
    BoxSet b;
    b.lo = -half;
    b.hi = half;
    return b;
  }

  // Euclidean norm of the farthest corner; the sup of ||x|| over the box.
  double sup_norm() const {
    Vec far = lo.cwiseAbs().cwiseMax(hi.cwiseAbs());
    return far.norm();
  }
};

// {x : ||x||_P <= r} with P symmetric positive definite.
struct WeightedBall {
  Mat P;
  double r = 0.0;
};

inline double weighted_sq(const Vec& x, const Mat& M) { return x.dot(M * x); }

}  // namespace dmpc
