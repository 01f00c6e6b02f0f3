#include "dmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <vector>

#include "dmpc/qp.hpp"

namespace dmpc {

namespace {

constexpr double kFeasTol = 5e-10;  // stricter than every published invariant
constexpr double kKktTol = 1e-7;
constexpr int kMaxIter = 200;

Vec flatten(const Mat& u_seq) {
  Vec u(u_seq.size());
  for (int t = 0; t < u_seq.rows(); ++t)
    u.segment(t * u_seq.cols(), u_seq.cols()) = u_seq.row(t).transpose();
  return u;
}

Mat unflatten(const Vec& u, int N, int nu) {
  Mat m(N, nu);
  for (int t = 0; t < N; ++t) m.row(t) = u.segment(t * nu, nu).transpose();
  return m;
}

struct Rollout {
  Mat e;   // (N+1) x nx
  Vec s;   // N+1
  double H = 0, coupling = 0;
};

Rollout roll(const OcpProblem& p, const Mat& u_seq) {
  const int N = p.N, nx = p.model->nx();
  Rollout r;
  r.e.resize(N + 1, nx);
  r.s.resize(N + 1);
  r.e.row(0) = p.e0.transpose();
  r.s(0) = p.s0;
  for (int t = 0; t < N; ++t) {
    const Vec et = r.e.row(t).transpose();
    const Vec ut = u_seq.row(t).transpose();
    r.e.row(t + 1) = p.model->step_nominal(et, ut, p.u_r[t]).transpose();
    r.s(t + 1) = step_sync(r.s(t), p.T, p.Y, p.Z, ut, Vec(p.u_r[t]));
    r.H += weighted_sq(et, p.ing->Q) + weighted_sq(ut, p.ing->R);
  }
  r.H += weighted_sq(r.e.row(N).transpose(), p.ing->P);
  for (const auto& [j, shat] : p.assumed) {
    const double rho = p.rho.at(j);
    for (int t = 0; t < N; ++t) {
      const double d = r.s(t) - shat(t);
      r.coupling += rho * d * d;
    }
  }
  if (!r.e.allFinite() || !r.s.allFinite() || !std::isfinite(r.H) ||
      !std::isfinite(r.coupling))
    throw DivergedRollout("non-finite rollout");
  return r;
}

struct Sens {
  std::vector<Mat> Je;  // tau = 0..N, each nx x (N*nu)
  std::vector<Vec> Js;  // tau = 0..N, each N*nu (row gradient of s(tau))
};

Sens sensitivities(const OcpProblem& p, const Mat& u_seq, const Rollout& r) {
  const int N = p.N, nx = p.model->nx(), nu = p.model->nu(), nU = N * nu;
  Sens sn;
  sn.Je.assign(N + 1, Mat::Zero(nx, nU));
  sn.Js.assign(N + 1, Vec::Zero(nU));
  Mat A(nx, nx), B(nx, nu);
  for (int t = 0; t < N; ++t) {
    p.model->jacobians(r.e.row(t).transpose(), u_seq.row(t).transpose(),
                       p.u_r[t], A, B);
    sn.Je[t + 1] = A * sn.Je[t];
    sn.Je[t + 1].block(0, t * nu, nx, nu) += B;
    sn.Js[t + 1] = sn.Js[t];
    sn.Js[t + 1].segment(t * nu, nu) += p.T * p.Y;
  }
  return sn;
}

struct Derivs {
  Vec gH;     // gradient of the stage cost H
  Vec gJ;     // gradient of J = H + coupling
  Mat B;      // Gauss-Newton Hessian of J
  Mat B_H;    // Gauss-Newton Hessian of H alone
  Mat B_term; // Gauss-Newton curvature of the terminal quadratic
};

Derivs derivatives(const OcpProblem& p, const Mat& u_seq, const Rollout& r,
                   const Sens& sn) {
  const int N = p.N, nu = p.model->nu(), nU = N * nu;
  Derivs d;
  d.gH = Vec::Zero(nU);
  d.B_H = Mat::Zero(nU, nU);
  for (int t = 1; t < N; ++t) {
    const Vec Qe = p.ing->Q * r.e.row(t).transpose();
    d.gH += 2.0 * sn.Je[t].transpose() * Qe;
    d.B_H += 2.0 * sn.Je[t].transpose() * p.ing->Q * sn.Je[t];
  }
  const Vec Pe = p.ing->P * r.e.row(N).transpose();
  d.gH += 2.0 * sn.Je[N].transpose() * Pe;
  d.B_term = 2.0 * sn.Je[N].transpose() * p.ing->P * sn.Je[N];
  d.B_H += d.B_term;
  for (int t = 0; t < N; ++t) {
    d.gH.segment(t * nu, nu) += 2.0 * p.ing->R * u_seq.row(t).transpose();
    d.B_H.block(t * nu, t * nu, nu, nu) += 2.0 * p.ing->R;
  }
  d.gJ = d.gH;
  d.B = d.B_H;
  for (const auto& [j, shat] : p.assumed) {
    const double rho = p.rho.at(j);
    for (int t = 1; t < N; ++t) {
      d.gJ += 2.0 * rho * (r.s(t) - shat(t)) * sn.Js[t];
      d.B += 2.0 * rho * sn.Js[t] * sn.Js[t].transpose();
    }
  }
  return d;
}

struct ConstraintSet {
  Mat Jc;  // rows x nU
  Vec c;   // row values, feasible iff c <= 0
};

std::string state_name(int tau, int comp, bool hi) {
  return "state[tau=" + std::to_string(tau) + ",comp=" + std::to_string(comp) +
         (hi ? ",hi]" : ",lo]");
}

// Row order: per tau in [1,N-1], per component, hi then lo; terminal; stability.
std::vector<std::string> row_names(const OcpProblem& p) {
  std::vector<std::string> names;
  for (int t = 1; t < p.N; ++t)
    for (int j = 0; j < p.model->nx(); ++j) {
      names.push_back(state_name(t, j, true));
      names.push_back(state_name(t, j, false));
    }
  names.push_back("terminal");
  if (p.phi) names.push_back("stability");
  return names;
}

Vec constraint_values(const OcpProblem& p, const Rollout& r) {
  const int N = p.N, nx = p.model->nx();
  const int rows = 2 * nx * (N - 1) + 1 + (p.phi ? 1 : 0);
  Vec c(rows);
  int k = 0;
  for (int t = 1; t < N; ++t) {
    const BoxSet& bx = p.boxes[t];
    for (int j = 0; j < nx; ++j) {
      c(k++) = r.e(t, j) - bx.hi(j);
      c(k++) = bx.lo(j) - r.e(t, j);
    }
  }
  c(k++) = weighted_sq(r.e.row(N).transpose(), p.ing->P) -
           p.ing->eps * p.ing->eps;
  if (p.phi) c(k++) = r.H - *p.phi;
  return c;
}

ConstraintSet constraints(const OcpProblem& p, const Rollout& r,
                          const Sens& sn, const Derivs& d) {
  const int N = p.N, nx = p.model->nx(), nU = N * p.model->nu();
  ConstraintSet cs;
  cs.c = constraint_values(p, r);
  cs.Jc = Mat::Zero(cs.c.size(), nU);
  int k = 0;
  for (int t = 1; t < N; ++t)
    for (int j = 0; j < nx; ++j) {
      cs.Jc.row(k++) = sn.Je[t].row(j);
      cs.Jc.row(k++) = -sn.Je[t].row(j);
    }
  cs.Jc.row(k++) =
      (2.0 * (p.ing->P * r.e.row(N).transpose()).transpose() * sn.Je[N]);
  if (p.phi) cs.Jc.row(k++) = d.gH.transpose();
  return cs;
}

double violation_sum(const Vec& c) {
  double v = 0;
  for (int i = 0; i < c.size(); ++i) v += std::max(0.0, c(i));
  return v;
}

// Gradient of J + lam' c at u, accumulated without forming the full row
// Jacobian; lam follows the constraint_values row order.
Vec lagrangian_gradient(const OcpProblem& p, const Mat& u_seq, const Vec& lam) {
  const Rollout r = roll(p, u_seq);
  const Sens sn = sensitivities(p, u_seq, r);
  const int N = p.N, nx = p.model->nx(), nu = p.model->nu(), nU = N * nu;
  Vec gH = Vec::Zero(nU);
  for (int t = 1; t < N; ++t)
    gH += 2.0 * sn.Je[t].transpose() * (p.ing->Q * r.e.row(t).transpose());
  const Vec gterm =
      2.0 * sn.Je[N].transpose() * (p.ing->P * r.e.row(N).transpose());
  gH += gterm;
  for (int t = 0; t < N; ++t)
    gH.segment(t * nu, nu) += 2.0 * p.ing->R * u_seq.row(t).transpose();
  Vec g = gH;
  for (const auto& [j, shat] : p.assumed) {
    const double rho = p.rho.at(j);
    for (int t = 1; t < N; ++t) g += 2.0 * rho * (r.s(t) - shat(t)) * sn.Js[t];
  }
  int k = 0;
  for (int t = 1; t < N; ++t)
    for (int j = 0; j < nx; ++j) {
      const double w = lam(k) - lam(k + 1);
      k += 2;
      if (w != 0.0) g += w * sn.Je[t].row(j).transpose();
    }
  if (lam(k) != 0.0) g += lam(k) * gterm;
  ++k;
  if (p.phi && lam(k) != 0.0) g += lam(k) * gH;
  return g;
}

}  // namespace

const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIter: return "max-iter";
    case SolverStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

void rollout(const OcpProblem& p, const Mat& u_seq, Mat& e_seq, Vec& s_seq) {
  const Rollout r = roll(p, u_seq);
  e_seq = r.e;
  s_seq = r.s;
}

CostParts build_cost(const OcpProblem& p, const Mat& u_seq) {
  const Rollout r = roll(p, u_seq);
  return {r.H + r.coupling, r.H, r.coupling};
}

FeasibilityCheck check_candidate(const OcpProblem& p, const Mat& u_seq) {
  const Rollout r = roll(p, u_seq);
  FeasibilityCheck fc;
  double worst_excess = 0;
  auto consider = [&](double viol, double tol, const std::string& name) {
    const double excess = viol - tol;
    if (excess > worst_excess) {
      worst_excess = excess;
      fc.worst = name;
      fc.violation = viol;
      fc.ok = false;
    }
  };
  for (int t = 0; t < p.N; ++t) {
    const Vec ut = u_seq.row(t).transpose();
    for (int j = 0; j < ut.size(); ++j) {
      consider(ut(j) - p.U.hi(j), 1e-9,
               "input[tau=" + std::to_string(t) + "]");
      consider(p.U.lo(j) - ut(j), 1e-9,
               "input[tau=" + std::to_string(t) + "]");
    }
  }
  const int last_box = std::min<int>(p.N, static_cast<int>(p.boxes.size()) - 1);
  for (int t = 0; t <= last_box; ++t) {
    for (int j = 0; j < p.model->nx(); ++j) {
      consider(r.e(t, j) - p.boxes[t].hi(j), 1e-7, state_name(t, j, true));
      consider(p.boxes[t].lo(j) - r.e(t, j), 1e-7, state_name(t, j, false));
    }
  }
  consider(weighted_sq(r.e.row(p.N).transpose(), p.ing->P) -
               p.ing->eps * p.ing->eps,
           1e-9, "terminal");
  if (p.phi) consider(r.H - *p.phi, 1e-7, "stability");
  return fc;
}

PredictedSolution solve(const OcpProblem& p, const Mat& warm_u) {
  const int N = p.N, nu = p.model->nu(), nU = N * nu;
  const Vec lo = flatten(Mat(Vec(p.U.lo).transpose().replicate(N, 1)));
  const Vec hi = flatten(Mat(Vec(p.U.hi).transpose().replicate(N, 1)));
  auto clamp = [&](Vec u) {
    return u.cwiseMax(lo).cwiseMin(hi);
  };
  Vec u = clamp(flatten(warm_u));

  double delta = 1.0;     // trust region, sup norm on the step
  double pi = 100.0;      // l1 penalty weight
  const double pi_cap = 1e9;
  Vec lambda;             // row multipliers from the latest QP

  struct Iterate {
    Vec u;
    double J = 0, vmax = 0, vsum = 0;
    int worst_row = -1;
    bool set = false;
  };
  Iterate best_feas, best_infeas;

  PredictedSolution out;
  out.solver_status = SolverStatus::MaxIter;
  int iter = 0;
  int qp_failures = 0;
  bool hit_kkt = false;
  static const bool dbg = std::getenv("DMPC_SOLVER_TRACE") != nullptr;

  for (iter = 0; iter < kMaxIter; ++iter) {
    const Mat u_seq = unflatten(u, N, nu);
    const Rollout r = roll(p, u_seq);
    const Sens sn = sensitivities(p, u_seq, r);
    const Derivs dv = derivatives(p, u_seq, r, sn);
    const ConstraintSet cs = constraints(p, r, sn, dv);
    const double J = r.H + r.coupling;
    const double vsum = violation_sum(cs.c);
    int worst_row = -1;
    double vmax = 0;
    for (int i = 0; i < cs.c.size(); ++i)
      if (cs.c(i) > vmax) { vmax = cs.c(i); worst_row = i; }

    if (vmax <= kFeasTol && (!best_feas.set || J < best_feas.J))
      best_feas = {u, J, vmax, vsum, worst_row, true};
    if (!best_infeas.set || vsum < best_infeas.vsum ||
        (vsum == best_infeas.vsum && J < best_infeas.J))
      best_infeas = {u, J, vmax, vsum, worst_row, true};

    // KKT: projected Lagrangian gradient against the hard input box.
    Vec gL = dv.gJ;
    if (lambda.size() == cs.c.size())
      gL += cs.Jc.transpose() * lambda;
    const double stat = (u - clamp(u - gL)).lpNorm<Eigen::Infinity>();
    if (vmax <= kFeasTol && stat <= kKktTol) {
      out.kkt = std::max(stat, vmax);
      hit_kkt = true;
      break;
    }

    // Curvature: central-difference Jacobian of the Lagrangian gradient,
    // convexified by an eigenvalue floor. Before the first QP supplies
    // multipliers, violated terminal/stability rows are seeded at the
    // penalty weight so their quadratic shape enters the model. Falls back
    // to Gauss-Newton (penalty-scaled on violated quadratic rows) when a
    // probe rollout diverges.
    const int nt = static_cast<int>(cs.c.size());
    const int term_row = 2 * p.model->nx() * (N - 1);
    Vec lam_fd = lambda.size() == nt ? lambda : Vec::Zero(nt);
    if (lambda.size() != nt) {
      if (cs.c(term_row) > kFeasTol) lam_fd(term_row) = pi;
      if (p.phi && cs.c(term_row + 1) > kFeasTol) lam_fd(term_row + 1) = pi;
    }
    Mat Bq;
    {
      Mat Hl(nU, nU);
      bool fd_ok = true;
      for (int j = 0; j < nU && fd_ok; ++j) {
        const double h = 1e-5 * (1.0 + std::abs(u(j)));
        try {
          Vec up = u, um = u;
          up(j) += h;
          um(j) -= h;
          const Vec gp = lagrangian_gradient(p, unflatten(up, N, nu), lam_fd);
          const Vec gm = lagrangian_gradient(p, unflatten(um, N, nu), lam_fd);
          Hl.col(j) = (gp - gm) / (2.0 * h);
        } catch (const DivergedRollout&) {
          fd_ok = false;
        }
      }
      if (fd_ok) {
        Hl = 0.5 * (Hl + Hl.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(Hl);
        const double floor =
            1e-8 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        Bq = es.eigenvectors() *
             es.eigenvalues().cwiseMax(floor).asDiagonal() *
             es.eigenvectors().transpose();
      } else {
        Bq = dv.B;
        if (cs.c(term_row) > kFeasTol) Bq += pi * dv.B_term;
        if (p.phi && cs.c(term_row + 1) > kFeasTol) Bq += pi * dv.B_H;
      }
    }
    QpProblem qp;
    qp.H = Mat::Zero(nU + nt, nU + nt);
    qp.H.topLeftCorner(nU, nU) = Bq + 1e-12 * Mat::Identity(nU, nU);
    // Slack curvature scaled by the penalty: at the optimum each slack still
    // equals the violated amount, so the l1 model is unchanged, but the KKT
    // systems stay well conditioned as the penalty grows.
    qp.H.bottomRightCorner(nt, nt) =
        std::max(1e-8, 1e-6 * pi) * Mat::Identity(nt, nt);
    qp.g.resize(nU + nt);
    qp.g.head(nU) = dv.gJ;
    qp.g.tail(nt).setConstant(pi);
    qp.lb.resize(nU + nt);
    qp.ub.resize(nU + nt);
    qp.lb.head(nU) = (lo - u).cwiseMax(-delta);
    qp.ub.head(nU) = (hi - u).cwiseMin(delta);
    qp.lb.tail(nt).setZero();
    qp.ub.tail(nt).setConstant(std::numeric_limits<double>::infinity());
    qp.A = Mat::Zero(nt, nU + nt);
    qp.A.leftCols(nU) = cs.Jc;
    qp.A.rightCols(nt) = -Mat::Identity(nt, nt);
    qp.b = -cs.c;
    Vec x0 = Vec::Zero(nU + nt);
    x0.tail(nt) = cs.c.cwiseMax(0.0);
    const QpResult qr = solve_qp(qp, x0, 1e-9, 500);
    if (!qr.ok) {
      if (dbg)
        std::fprintf(stderr,
                     "  sqp %3d: J=%.6g vmax=%.3g vsum=%.3g delta=%.3g pi=%.3g "
                     "QP FAIL rp=%.3g rd=%.3g it=%d\n",
                     iter, J, vmax, vsum, delta, pi, qr.primal_residual,
                     qr.dual_residual, qr.iters);
      if (++qp_failures >= 3) break;
      delta = std::max(delta * 0.5, 1e-12);
      continue;
    }
    qp_failures = 0;
    Vec d = qr.x.head(nU);
    Vec t = qr.x.tail(nt);
    lambda = qr.y_rows;

    struct Trial {
      bool ok = false;
      double J = 0, v = 0;
      Vec c;
    };
    auto eval_trial = [&](const Vec& ut) -> Trial {
      try {
        const Rollout rt = roll(p, unflatten(ut, N, nu));
        Vec ct = constraint_values(p, rt);
        const double v = violation_sum(ct);
        return {true, rt.H + rt.coupling, v, std::move(ct)};
      } catch (const DivergedRollout&) {
        return {};
      }
    };
    auto model_pred = [&](const Vec& dd, const Vec& tt) {
      return pi * vsum - (dv.gJ.dot(dd) + 0.5 * dd.dot(Bq * dd)) -
             pi * tt.sum();
    };

    const double lin_v = t.sum();
    const double pred = model_pred(d, t);
    Vec u_trial = clamp(u + d);
    Trial tr = eval_trial(u_trial);
    double ared = tr.ok ? (J + pi * vsum) - (tr.J + pi * tr.v)
                        : -std::numeric_limits<double>::infinity();
    const double ratio0 = pred > 1e-16 ? ared / pred : (ared > 0 ? 1.0 : -1.0);

    // Second-order correction: when the full step bends into violation, shift
    // the rows by the constraint curvature observed at the trial point. The
    // corrected step is judged against the original predicted reduction.
    if (tr.ok && ratio0 <= 0.25 && tr.v > lin_v + kFeasTol) {
      QpProblem qs = qp;
      qs.b = -(tr.c - cs.Jc * d);
      Vec xs = qr.x;
      xs.tail(nt) = tr.c.cwiseMax(0.0);
      const QpResult q2 = solve_qp(qs, xs, 1e-9, 500);
      if (q2.ok) {
        const Vec d2 = q2.x.head(nU);
        const Vec u2 = clamp(u + d2);
        const Trial tr2 = eval_trial(u2);
        if (tr2.ok) {
          const double ared2 = (J + pi * vsum) - (tr2.J + pi * tr2.v);
          if (ared2 > ared) {
            d = d2;
            t = q2.x.tail(nt);
            u_trial = u2;
            tr = tr2;
            ared = ared2;
            lambda = q2.y_rows;
          }
        }
      }
    }
    const bool trial_ok = tr.ok;

    const double step = d.lpNorm<Eigen::Infinity>();
    const double delta_used = delta;
    const double ratio =
        pred > 1e-16 ? ared / pred : (ared > 0 ? 1.0 : -1.0);
    const bool accept = trial_ok && ratio > 1e-8;
    if (dbg)
      std::fprintf(stderr,
                   "  sqp %3d: J=%.6g vmax=%.3g vsum=%.3g delta=%.3g pi=%.3g "
                   "step=%.3g pred=%.3g ared=%.3g ratio=%.3g stat=%.3g %s\n",
                   iter, J, vmax, vsum, delta, pi, step, pred, ared, ratio,
                   stat, accept ? "acc" : "rej");
    if (accept) {
      u = u_trial;
      if (ratio >= 0.7 && step >= 0.9 * delta) delta = std::min(delta * 2.0, 10.0);
      else if (ratio < 0.25) delta = std::max(step * 0.25, 1e-12);
    } else {
      delta = std::max(std::min(delta, step) * 0.25, 1e-12);
    }

    // Exactness: raise the penalty only when the QP keeps slacks active
    // without the trust region being the binding limit.
    if (lin_v > std::max(kFeasTol, 0.9 * vsum) && step < 0.9 * delta_used &&
        pi < pi_cap)
      pi = std::min(pi * 10.0, pi_cap);

    if (delta <= 1e-11 && step <= 1e-11) break;  // stalled
  }

  const Iterate& pick = best_feas.set ? best_feas : best_infeas;
  const Mat u_best = unflatten(pick.u, N, nu);
  const Rollout rb = roll(p, u_best);
  out.u_seq = u_best;
  out.e_seq = rb.e;
  out.s_seq = rb.s;
  out.stage_cost = rb.H;
  out.coupling_cost = rb.coupling;
  out.total = rb.H + rb.coupling;
  out.iters = iter;
  if (best_feas.set) {
    out.solver_status =
        hit_kkt ? SolverStatus::Converged : SolverStatus::MaxIter;
    if (!hit_kkt) out.kkt = pick.vmax;
  } else {
    out.solver_status = SolverStatus::Infeasible;
    out.kkt = pick.vmax;
    const std::vector<std::string> names = row_names(p);
    out.most_violated =
        pick.worst_row >= 0 ? names[pick.worst_row] : "terminal";
  }
  return out;
}

Mat warm_start_from(const PredictedSolution& prev, int m,
                    const OcpProblem& next) {
  const int N = next.N, nu = next.model->nu();
  Mat u(N, nu);
  Vec ebar = next.e0;
  for (int t = 0; t < N; ++t) {
    Vec ut;
    if (t <= N - m - 1) ut = prev.u_seq.row(t + m).transpose();
    else ut = next.ing->K * ebar;
    u.row(t) = ut.transpose();
    ebar = next.model->step_nominal(ebar, ut, next.u_r[t]);
  }
  return u;
}

double phi_bound(const Vec& prev_actual_e, const Vec& prev_u_applied,
                 double prev_H, double psi_m_eta, const AgentIngredients& ing) {
  return prev_H - weighted_sq(prev_actual_e, ing.Q) -
         weighted_sq(prev_u_applied, ing.R) + psi_m_eta;
}

}  // namespace dmpc
