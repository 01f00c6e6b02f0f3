#include "dmpc/ingredients.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "dmpc/parallel.hpp"
#include "dmpc/sampling.hpp"

namespace dmpc {

void AgentIngredients::refresh_spectral() {
  Eigen::SelfAdjointEigenSolver<Mat> ep(P), eq(Q), eqs(Q_star);
  lambda_max_P = ep.eigenvalues().maxCoeff();
  lambda_max_sqrtP = std::sqrt(lambda_max_P);
  lambda_min_Q = eq.eigenvalues().minCoeff();
  lambda_min_Qstar = eqs.eigenvalues().minCoeff();
}

std::pair<Mat, Mat> linearize(const Model& m, const Vec2& ur) {
  const double h = 1e-6;
  const int nx = m.nx(), nu = m.nu();
  Mat G(nx, nx), H(nx, nu);
  Vec e0 = Vec::Zero(nx), u0 = Vec::Zero(nu);
  for (int j = 0; j < nx; ++j) {
    Vec ep = e0, em = e0;
    ep[j] += h;
    em[j] -= h;
    G.col(j) = (m.f(ep, u0, ur) - m.f(em, u0, ur)) / (2.0 * h);
  }
  for (int j = 0; j < nu; ++j) {
    Vec up = u0, um = u0;
    up[j] += h;
    um[j] -= h;
    H.col(j) = (m.f(e0, up, ur) - m.f(e0, um, ur)) / (2.0 * h);
  }
  if (!G.allFinite() || !H.allFinite())
    throw SynthesisError("linearization produced non-finite Jacobian entries");
  return {G, H};
}

double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat solve_dare(const Mat& G, const Mat& H, const Mat& Q, const Mat& R) {
  Mat P = Q;
  const int max_iter = 200000;
  const double rtol = 1e-13;
  for (int it = 0; it < max_iter; ++it) {
    Mat S = R + H.transpose() * P * H;
    Mat Kt = S.ldlt().solve(H.transpose() * P * G);
    Mat Pn = Q + G.transpose() * P * (G - H * Kt);
    Pn = 0.5 * (Pn + Pn.transpose());
    double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff < rtol * P.cwiseAbs().maxCoeff()) return P;
  }
  throw SynthesisError("Riccati value iteration did not converge (pair likely not stabilizable)");
}

Mat solve_dlyap(const Mat& Gc, const Mat& S) {
  const int n = static_cast<int>(Gc.rows());
  Mat M = Mat::Identity(n * n, n * n);
  // M = I - kron(Gc^T, Gc^T); vec is column-major
  Mat Gt = Gc.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      M.block(i * n, j * n, n, n) -= Gt(i, j) * Gt;
  Vec s(n * n);
  for (int c = 0; c < n; ++c) s.segment(c * n, n) = S.col(c);
  Vec x = M.partialPivLu().solve(s);
  Mat X(n, n);
  for (int c = 0; c < n; ++c) X.col(c) = x.segment(c * n, n);
  return 0.5 * (X + X.transpose());
}

std::pair<Mat, Mat> synthesize_terminal(const Mat& G, const Mat& H, const Mat& Q,
                                        const Mat& R, double margin) {
  if (margin < 0.05) throw SynthesisError("synthesis margin below 0.05");
  Mat K;
  if (H.isZero(0.0)) {
    // no control authority: admissible only if G is already Schur
    K = Mat::Zero(H.cols(), G.rows());
  } else {
    Mat Pr = solve_dare(G, H, Q, R);
    K = -(R + H.transpose() * Pr * H).ldlt().solve(H.transpose() * Pr * G);
  }
  Mat Gc = G + H * K;
  if (spectral_radius(Gc) >= 1.0)
    throw SynthesisError("closed loop not Schur stable (pair not stabilizable)");
  Mat Qs = Q + K.transpose() * R * K;
  Mat P = solve_dlyap(Gc, (1.0 + margin) * Qs);
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw SynthesisError("Lyapunov solve returned a non-positive-definite terminal weight");
  Mat resid = Gc.transpose() * P * Gc - P + (1.0 + margin) * Qs;
  if (resid.cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, P.cwiseAbs().maxCoeff()))
    throw SynthesisError("Lyapunov residual check failed after synthesis");
  return {K, P};
}

ValidationReport validate_terminal_region(const Model& m,
                                          const AgentIngredients& ing,
                                          const Vec2& ur, const BoxSet& U,
                                          int samples, bool parallel) {
  ValidationReport rep;
  rep.samples = samples;
  Eigen::SelfAdjointEigenSolver<Mat> es(ing.P);
  Mat P_inv_sqrt = es.operatorInverseSqrt();

  // pre-generate sample points so the parallel and serial paths see the same set
  std::vector<Vec> pts(samples);
  std::uint64_t cursor = 1;
  for (int i = 0; i < samples; ++i)
    pts[i] = halton_in_ellipsoid(cursor, P_inv_sqrt, ing.eps_r);

  std::vector<std::vector<ValidationIssue>> found(samples);
  auto body = [&](std::int64_t i) {
    const Vec& e = pts[i];
    Vec u = ing.K * e;
    Vec en = m.f(e, u, ur);
    double vp = weighted_sq(e, ing.P);
    double vn = weighted_sq(en, ing.P);
    Vec lo_gap = u - U.lo, hi_gap = U.hi - u;
    double ugap = std::min(lo_gap.minCoeff(), hi_gap.minCoeff());
    if (ugap < 0.0)
      found[i].push_back({"input", e, -ugap});
    if (vn > ing.eps_r * ing.eps_r)
      found[i].push_back({"invariance", e, vn - ing.eps_r * ing.eps_r});
    double dec = vn - vp + weighted_sq(e, ing.Q_star);
    if (dec > 0.0)
      found[i].push_back({"decrease", e, dec});
  };
  if (parallel)
    parallel_for(samples, body);
  else
    serial_for(samples, body);
  for (auto& v : found)
    for (auto& is : v) rep.issues.push_back(std::move(is));
  return rep;
}

void weighted_norm_constants(AgentIngredients& ing, double sup_norm) {
  Eigen::SelfAdjointEigenSolver<Mat> eq(ing.Q), eqs(ing.Q_star), ep(ing.P);
  ing.L_Q = 2.0 * eq.eigenvalues().maxCoeff() * sup_norm;
  ing.L_Qstar = 2.0 * eqs.eigenvalues().maxCoeff() * sup_norm;
  ing.L_P = 2.0 * ep.eigenvalues().maxCoeff() * sup_norm;
}

void weighted_norm_constants(AgentIngredients& ing, const BoxSet& state_set) {
  weighted_norm_constants(ing, state_set.sup_norm());
}

}  // namespace dmpc
