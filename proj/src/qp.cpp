#include "dmpc/qp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dmpc {

namespace {

// Constraint ids: [0,n) lower bounds, [n,2n) upper bounds, [2n,2n+m) A rows.
// Outward normals: lower bound j is -x_j <= -lb_j with normal -e_j.

struct Normal {
  Vec v;
  double rhs = 0.0;
};

Normal normal_of(const QpProblem& qp, int id) {
  const int n = static_cast<int>(qp.g.size());
  Normal nm;
  nm.v = Vec::Zero(n);
  if (id < n) {
    nm.v(id) = -1.0;
    nm.rhs = -qp.lb(id);
  } else if (id < 2 * n) {
    nm.v(id - n) = 1.0;
    nm.rhs = qp.ub(id - n);
  } else {
    nm.v = qp.A.row(id - 2 * n).transpose();
    nm.rhs = qp.b(id - 2 * n);
  }
  return nm;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const Vec& x0, double tol,
                  int max_iter) {
  const int n = static_cast<int>(qp.g.size());
  const int m = static_cast<int>(qp.A.rows());
  QpResult res;
  Vec x = x0.cwiseMax(qp.lb).cwiseMin(qp.ub);

  auto finalize = [&](bool ok, const std::vector<int>& W, const Vec& lam) {
    res.x = x;
    res.y_bounds = Vec::Zero(n);
    res.y_rows = Vec::Zero(m);
    for (int i = 0; i < static_cast<int>(W.size()); ++i) {
      const double val = std::max(lam.size() > i ? lam(i) : 0.0, 0.0);
      if (W[i] < n)
        res.y_bounds(W[i]) -= val;
      else if (W[i] < 2 * n)
        res.y_bounds(W[i] - n) += val;
      else
        res.y_rows(W[i] - 2 * n) = val;
    }
    Vec grad = qp.H * x + qp.g + res.y_bounds;
    if (m > 0) grad += qp.A.transpose() * res.y_rows;
    res.dual_residual = grad.lpNorm<Eigen::Infinity>();
    double rp = 0.0;
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(qp.lb(j))) rp = std::max(rp, qp.lb(j) - x(j));
      if (std::isfinite(qp.ub(j))) rp = std::max(rp, x(j) - qp.ub(j));
    }
    if (m > 0) rp = std::max(rp, (qp.A * x - qp.b).maxCoeff());
    res.primal_residual = std::max(rp, 0.0);
    res.ok = ok;
  };

  // The caller provides a row-feasible start; only the box gets projected.
  if (m > 0) {
    const double v0 = (qp.A * x - qp.b).maxCoeff();
    if (v0 > 1e-7 * std::max(1.0, qp.b.cwiseAbs().maxCoeff())) {
      finalize(false, {}, Vec());
      return res;
    }
  }

  const double gscale = 1.0 + qp.g.cwiseAbs().maxCoeff();
  const double lam_tol = std::max(tol, 1e-11) * gscale;

  std::vector<int> W;
  std::vector<char> in_w(static_cast<size_t>(2 * n + m), 0);
  auto add = [&](int id) {
    W.push_back(id);
    in_w[static_cast<size_t>(id)] = 1;
  };
  auto drop_at = [&](int pos) {
    in_w[static_cast<size_t>(W[pos])] = 0;
    W.erase(W.begin() + pos);
  };
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb(j)) &&
        x(j) - qp.lb(j) <= 1e-12 * (1.0 + std::abs(qp.lb(j)))) {
      x(j) = qp.lb(j);
      add(j);
    } else if (std::isfinite(qp.ub(j)) &&
               qp.ub(j) - x(j) <= 1e-12 * (1.0 + std::abs(qp.ub(j)))) {
      x(j) = qp.ub(j);
      add(n + j);
    }
  }
  for (int k = 0; k < m; ++k) {
    const double gap = qp.b(k) - qp.A.row(k).dot(x);
    if (std::abs(gap) <= 1e-12 * (1.0 + std::abs(qp.b(k)))) add(2 * n + k);
  }

  Vec row_norm = Vec::Ones(m);
  for (int k = 0; k < m; ++k)
    row_norm(k) = std::max(qp.A.row(k).lpNorm<Eigen::Infinity>(), 1e-12);

  Vec lam;
  int it = 0;
  int singular_pops = 0;
  for (it = 0; it < max_iter; ++it) {
    const int k = static_cast<int>(W.size());
    // Equality-constrained KKT system on the working set, with normals
    // scaled to unit sup norm; the equality rhs also corrects drift.
    Mat kkt = Mat::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = qp.H;
    Vec rhs(n + k);
    rhs.head(n) = -(qp.H * x + qp.g);
    Vec scale = Vec::Ones(k);
    for (int i = 0; i < k; ++i) {
      const Normal nm = normal_of(qp, W[i]);
      scale(i) = std::max(nm.v.lpNorm<Eigen::Infinity>(), 1e-12);
      const Vec nv = nm.v / scale(i);
      kkt.block(0, n + i, n, 1) = nv;
      kkt.block(n + i, 0, 1, n) = nv.transpose();
      rhs(n + i) = (nm.rhs - nm.v.dot(x)) / scale(i);
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) {
      if (W.empty() || ++singular_pops > 2 * n + m) break;
      drop_at(k - 1);
      continue;
    }
    const Vec sol = lu.solve(rhs);
    const Vec p = sol.head(n);
    lam = sol.tail(k);
    for (int i = 0; i < k; ++i) lam(i) /= scale(i);

    const double pmax = p.lpNorm<Eigen::Infinity>();
    if (pmax <= 1e-11 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      int drop = -1;
      double worst = -lam_tol;
      for (int i = 0; i < k; ++i)
        if (lam(i) < worst) {
          worst = lam(i);
          drop = i;
        }
      if (drop < 0) {
        finalize(true, W, lam);
        res.iters = it;
        return res;
      }
      drop_at(drop);
      continue;
    }

    // Ratio test over constraints outside the working set.
    double alpha = 1.0;
    int block = -1;
    auto consider = [&](int id, double num, double den, double nscale) {
      if (den <= 1e-14 * nscale * (1.0 + pmax)) return;
      const double a = std::max(num, 0.0) / den;
      if (a < alpha - 1e-14 || (a < alpha + 1e-14 && block >= 0 && id < block)) {
        alpha = std::min(a, alpha);
        block = id;
      }
    };
    for (int j = 0; j < n; ++j) {
      if (!in_w[static_cast<size_t>(j)] && std::isfinite(qp.lb(j)))
        consider(j, x(j) - qp.lb(j), -p(j), 1.0);
      if (!in_w[static_cast<size_t>(n + j)] && std::isfinite(qp.ub(j)))
        consider(n + j, qp.ub(j) - x(j), p(j), 1.0);
    }
    for (int r = 0; r < m; ++r) {
      if (in_w[static_cast<size_t>(2 * n + r)]) continue;
      consider(2 * n + r, qp.b(r) - qp.A.row(r).dot(x), qp.A.row(r).dot(p),
               row_norm(r));
    }

    x += alpha * p;
    if (block >= 0) {
      if (block < n)
        x(block) = qp.lb(block);
      else if (block < 2 * n)
        x(block - n) = qp.ub(block - n);
      add(block);
    }
  }

  finalize(false, W, lam);
  res.iters = it;
  return res;
}

}  // namespace dmpc
