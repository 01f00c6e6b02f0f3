#pragma once
#include "dmpc/types.hpp"

namespace dmpc {

// minimize 1/2 x^T H x + g^T x   s.t.  lb <= x <= ub,  A x <= b
// H symmetric positive semidefinite.
struct QpProblem {
  Mat H;
  Vec g;
  Vec lb, ub;
  Mat A;  // may have zero rows
  Vec b;
};

struct QpResult {
  Vec x;
  Vec y_bounds;  // multipliers for the box (signed: >0 upper, <0 lower)
  Vec y_rows;    // multipliers for A x <= b (nonnegative)
  int iters = 0;
  double primal_residual = 0.0, dual_residual = 0.0;
  bool ok = false;
};

// Primal active-set method with dense KKT solves; deterministic for fixed
// inputs. x0 is projected onto the box and must already satisfy the rows.
QpResult solve_qp(const QpProblem& qp, const Vec& x0, double tol = 1e-9,
                  int max_iter = 500);

}  // namespace dmpc
