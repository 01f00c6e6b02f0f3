#pragma once
#include <stdexcept>
#include <vector>

#include "dmpc/types.hpp"

namespace dmpc {

// One rotating term of a plane path: amp * (cos(rate*s+phase), sin(rate*s+phase)).
struct PhasorTerm {
  double amp = 0.0, rate = 0.0, phase = 0.0;
};

struct PhasorPath {
  std::vector<PhasorTerm> terms;
  double h_s = 1e-4;  // finite-difference step for reference_inputs
  Vec2 position(double s) const;
};

struct SingularReferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// (v_r, w_r) at parameter s by central differences with step path.h_s:
// v_r = path speed, w_r = heading rate. Throws SingularReferenceError when the
// speed is numerically zero (heading undefined).
Vec2 reference_inputs(const PhasorPath& path, double s);

// Discrete-time error-dynamics interface; e(k+1) = f(e, u) + d with the
// reference input pair (v_r, w_r) supplied per step.
class Model {
 public:
  virtual ~Model() = default;
  virtual int nx() const = 0;
  virtual int nu() const = 0;
  virtual Vec f(const Vec& e, const Vec& u, const Vec2& ur) const = 0;
  virtual void jacobians(const Vec& e, const Vec& u, const Vec2& ur, Mat& A,
                         Mat& B) const = 0;

  Vec step_nominal(const Vec& e, const Vec& u, const Vec2& ur) const;
  Vec step_true(const Vec& e, const Vec& u, const Vec2& ur, const Vec& d) const;
};

// Unicycle tracking-error model in body coordinates:
//   x' = x + T(w y + v_e),  y' = y + T(-w x + v_r sin th),  th' = th + T w_e
// with the actual angular velocity closed as w = w_r - w_e.
class UnicycleModel final : public Model {
 public:
  double T = 0.2;
  PhasorPath path;

  int nx() const override { return 3; }
  int nu() const override { return 2; }
  Vec f(const Vec& e, const Vec& u, const Vec2& ur) const override;
  void jacobians(const Vec& e, const Vec& u, const Vec2& ur, Mat& A,
                 Mat& B) const override;
};

// s' = s + T (Y u + Z u_r)
double step_sync(double s, double T, const Vec& Y, const Vec& Z, const Vec& u,
                 const Vec& ur);

// Largest sampled ratio ||g(e1,u)-g(e2,u)|| / ||e1-e2|| with g(e,u)=f(e,u)-e,
// over deterministic low-discrepancy pairs in E x E x U.
double max_lipschitz_ratio(const Model& m, const BoxSet& E, const BoxSet& U,
                           const Vec2& ur, int pairs, bool parallel = true);

}  // namespace dmpc
