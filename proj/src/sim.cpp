#include "dmpc/sim.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "dmpc/coordination.hpp"
#include "dmpc/ocp.hpp"
#include "dmpc/parallel.hpp"
#include "dmpc/sampling.hpp"
#include "dmpc/trigger.hpp"

namespace dmpc {

namespace {

enum class Mode { Mpc, Terminal };
enum class ApplySource { Incumbent, Terminal, Pending };

struct Spect {
  double q_min = 0, q_max = 0, r_min = 0, r_max = 0, p_min = 0, p_max = 0;
};

struct AgentState {
  const PreparedAgent* pa = nullptr;
  Mode mode = Mode::Mpc;
  Vec e;
  double s = 0.0;
  Rng rng;
  Spect spect;

  bool has_sol = false;
  bool ever_feasible = false;
  PredictedSolution sol;
  int solved_at = -1;
  int phase_m = 0;
  int phase_pos = 0;
  int next_trigger = 0;
  NeighborBuffer buf;

  bool chain_armed = false;
  double chain_H = 0.0;
  bool phi_ready = false;
  double phi_prev_H = 0.0;
  Vec phi_e, phi_u;
  double psi_m_eta = 0.0;

  bool has_pending = false;
  Vec pending_u;
  std::string pending_note;

  AgentReport rep;
};

std::vector<Vec2> reference_sequence(const PreparedAgent& pa, double T, int N,
                                     double s0) {
  std::vector<Vec2> ur(N);
  double s = s0;
  const Vec zero_u = Vec::Zero(2);
  for (int t = 0; t < N; ++t) {
    ur[t] = reference_inputs(pa.model.path, s);
    s = step_sync(s, T, pa.cfg.Y, pa.cfg.Z, zero_u, Vec(ur[t]));
  }
  return ur;
}

OcpProblem make_problem(const PreparedAgent& pa, double T, int N, const Vec& e0,
                        double s_now, std::map<int, Vec> assumed,
                        std::optional<double> phi) {
  OcpProblem p;
  p.model = &pa.model;
  p.ing = &pa.ing;
  p.N = N;
  p.T = T;
  p.e0 = e0;
  p.s0 = s_now;
  p.assumed = std::move(assumed);
  for (const auto& [j, seq] : p.assumed) p.rho[j] = pa.cfg.rho.at(j);
  p.u_r = reference_sequence(pa, T, N, s_now);
  p.phi = phi;
  p.boxes = pa.boxes;
  p.U = pa.cfg.U;
  p.Y = pa.cfg.Y;
  p.Z = pa.cfg.Z;
  return p;
}

// Body-frame tracking error to plane pose: p = p_r - R(theta) [x_e; y_e],
// theta = theta_r - theta_e with theta_r the reference heading at s.
void plane_pose(const PhasorPath& path, double s, const Vec& e, double out[5]) {
  const double h = path.h_s;
  const Vec2 p_r = path.position(s);
  const Vec2 d1 = (path.position(s + h) - path.position(s - h)) / (2.0 * h);
  const double theta_r = std::atan2(d1.y(), d1.x());
  const double theta = theta_r - e(2);
  const double c = std::cos(theta), sn = std::sin(theta);
  out[0] = p_r.x() - (c * e(0) - sn * e(1));
  out[1] = p_r.y() - (sn * e(0) + c * e(1));
  out[2] = theta;
  out[3] = p_r.x();
  out[4] = p_r.y();
}

struct HookSink {
  RunReport* report = nullptr;
  TraceWriter* trace = nullptr;
  VerifyMode mode = VerifyMode::Off;

  bool record(AgentState& a, int k, const std::string& name, bool pass,
              double value, double bound, const std::string& detail = "") {
    HookTally& tally = a.rep.hooks[name];
    tally.checks++;
    if (!pass) {
      tally.failures++;
      report->total_hook_failures++;
    }
    if (trace) {
      TraceRecord r;
      r.k = k;
      r.agent = a.rep.id;
      r.kind = EventKind::HookResult;
      r.fields["hook"] = name;
      r.fields["pass"] = pass ? "1" : "0";
      r.fields["value"] = fmt_double(value);
      r.fields["bound"] = fmt_double(bound);
      if (!detail.empty()) r.fields["detail"] = detail;
      trace->add(std::move(r));
    }
    if (!pass && mode == VerifyMode::Strict && !report->aborted) {
      std::ostringstream os;
      os << "step " << k << " agent " << a.rep.id << " hook " << name
         << ": value " << fmt_double(value) << " exceeds bound "
         << fmt_double(bound);
      if (!detail.empty()) os << " (" << detail << ")";
      report->aborted = true;
      report->abort_reason = os.str();
    }
    return pass;
  }
};

// Termwise quadratic envelopes of the stage cost on the fresh solution.
void iss_envelope_hook(HookSink& hooks, AgentState& a, int k,
                       const PredictedSolution& sl, int N) {
  const AgentIngredients& ing = a.pa->ing;
  double worst = 0.0;
  auto term = [&](double sq, double n2, double lo, double hi) {
    const double scale = 1.0 + std::abs(sq);
    worst = std::max(worst, (lo * n2 - sq) / scale);
    worst = std::max(worst, (sq - hi * n2) / scale);
  };
  for (int t = 0; t < N; ++t) {
    const Vec et = sl.e_seq.row(t).transpose();
    const Vec ut = sl.u_seq.row(t).transpose();
    term(weighted_sq(et, ing.Q), et.squaredNorm(), a.spect.q_min, a.spect.q_max);
    term(weighted_sq(ut, ing.R), ut.squaredNorm(), a.spect.r_min, a.spect.r_max);
  }
  const Vec eN = sl.e_seq.row(N).transpose();
  term(weighted_sq(eN, ing.P), eN.squaredNorm(), a.spect.p_min, a.spect.p_max);
  hooks.record(a, k, "iss-envelope", worst <= 1e-9, worst, 1e-9);
}

Broadcast terminal_ramp(const AgentState& a, double T, int N, int k) {
  Broadcast b;
  b.sender = a.rep.id;
  b.instant = k;
  b.s_seq.resize(N + 1);
  double s = a.s;
  const Vec zero_u = Vec::Zero(2);
  for (int t = 0; t <= N; ++t) {
    b.s_seq(t) = s;
    if (t < N) {
      const Vec2 ur = reference_inputs(a.pa->model.path, s);
      s = step_sync(s, T, a.pa->cfg.Y, a.pa->cfg.Z, zero_u, Vec(ur));
    }
  }
  return b;
}

}  // namespace

RunReport run(const Prepared& prep, TraceWriter* trace) {
  const ExperimentConfig& cfg = prep.cfg;
  const int N = cfg.N;
  const bool hooks_on = cfg.verification != VerifyMode::Off;

  RunReport report;
  report.agents.resize(prep.agents.size());

  std::vector<AgentState> st(prep.agents.size());
  std::vector<int> order(prep.agents.size());
  for (std::size_t i = 0; i < prep.agents.size(); ++i) {
    const PreparedAgent& pa = prep.agents[i];
    AgentState& a = st[i];
    a.pa = &pa;
    a.e = pa.cfg.e0;
    a.s = pa.cfg.s0;
    a.rng.seed(stream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    a.rep.id = pa.cfg.id;
    a.rep.e_hist.push_back(a.e);
    a.rep.s_hist.push_back(a.s);
    Eigen::SelfAdjointEigenSolver<Mat> esq(pa.ing.Q), esr(pa.ing.R),
        esp(pa.ing.P);
    a.spect = {esq.eigenvalues().minCoeff(), esq.eigenvalues().maxCoeff(),
               esr.eigenvalues().minCoeff(), esr.eigenvalues().maxCoeff(),
               esp.eigenvalues().minCoeff(), esp.eigenvalues().maxCoeff()};
    order[i] = static_cast<int>(i);
  }
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return st[x].rep.id < st[y].rep.id;
  });

  auto neighbors_of = [&](int id) -> const std::vector<int>& {
    static const std::vector<int> none;
    const auto it = cfg.adjacency.find(id);
    return it == cfg.adjacency.end() ? none : it->second;
  };

  HookSink hooks{&report, trace, cfg.verification};

  auto emit_sample = [&](const AgentState& a, int k) {
    if (!trace) return;
    TraceRecord r;
    r.k = k;
    r.agent = a.rep.id;
    r.kind = EventKind::Sample;
    r.fields["mode"] = a.mode == Mode::Terminal ? "terminal" : "mpc";
    r.fields["e_x"] = fmt_double(a.e(0));
    r.fields["e_y"] = fmt_double(a.e(1));
    r.fields["e_th"] = fmt_double(a.e(2));
    r.fields["s"] = fmt_double(a.s);
    double pose[5];
    plane_pose(a.pa->model.path, a.s, a.e, pose);
    r.fields["px"] = fmt_double(pose[0]);
    r.fields["py"] = fmt_double(pose[1]);
    r.fields["theta"] = fmt_double(pose[2]);
    r.fields["ref_x"] = fmt_double(pose[3]);
    r.fields["ref_y"] = fmt_double(pose[4]);
    trace->add(std::move(r));
  };

  struct Job {
    std::size_t i = 0;
    OcpProblem prob;
    Mat warm;
    bool check_candidate_hook = false;
  };

  for (int k = 0; k < cfg.steps && !report.aborted; ++k) {
    std::vector<Job> jobs;
    std::vector<Broadcast> staged;

    // Mode decisions and problem assembly, ascending agent id.
    for (int oi : order) {
      AgentState& a = st[oi];
      const PreparedAgent& pa = *a.pa;
      if (k != a.next_trigger) continue;
      const double pn2 = weighted_sq(a.e, pa.ing.P);
      if (pn2 <= pa.ing.eps_r * pa.ing.eps_r) {
        if (a.mode != Mode::Terminal) {
          a.mode = Mode::Terminal;
          a.rep.mode_flips++;
          a.has_sol = false;
          a.chain_armed = false;
          a.phi_ready = false;
        }
        a.has_pending = true;
        a.pending_u = pa.ing.K * a.e;
        a.pending_note = "terminal";
        a.next_trigger = k + 1;
        staged.push_back(terminal_ramp(a, cfg.T, N, k));
        continue;
      }
      if (a.mode == Mode::Terminal) {
        a.mode = Mode::Mpc;
        a.rep.mode_flips++;
      }
      std::map<int, Vec> assumed;
      for (int j : neighbors_of(a.rep.id)) {
        try {
          assumed[j] = assumed_sequence(a.buf, j, k, N, pa.cfg.mu.at(j));
        } catch (const ColdStartError&) {
          assumed[j] = Vec::Constant(N, pa.cfg.s0);
        }
      }
      std::optional<double> phi;
      if (a.phi_ready)
        phi = phi_bound(a.phi_e, a.phi_u, a.phi_prev_H, a.psi_m_eta, pa.ing);
      Job job;
      job.i = static_cast<std::size_t>(oi);
      job.prob = make_problem(pa, cfg.T, N, a.e, a.s, std::move(assumed), phi);
      job.warm = a.has_sol ? warm_start_from(a.sol, k - a.solved_at, job.prob)
                           : Mat::Zero(N, 2);
      job.check_candidate_hook = a.has_sol && a.chain_armed;
      jobs.push_back(std::move(job));
    }

    // Independent solves; commit order below restores determinism.
    std::vector<PredictedSolution> sols(jobs.size());
    parallel_for(static_cast<std::int64_t>(jobs.size()),
                 [&](std::int64_t j) { sols[j] = solve(jobs[j].prob, jobs[j].warm); });

    for (std::size_t jx = 0; jx < jobs.size(); ++jx) {
      Job& job = jobs[jx];
      AgentState& a = st[job.i];
      const PreparedAgent& pa = *a.pa;
      if (hooks_on && job.check_candidate_hook) {
        const FeasibilityCheck fc = check_candidate(job.prob, job.warm);
        hooks.record(a, k, "candidate-feasibility", fc.ok, fc.violation, 0.0,
                     fc.worst);
      }
      PredictedSolution& sl = sols[jx];
      a.rep.solves++;
      a.rep.trigger_steps.push_back(k);
      std::string note;
      if (sl.solver_status == SolverStatus::Infeasible)
        note = a.ever_feasible ? (a.has_sol ? "fallback" : "recovery")
                               : "bootstrap";
      if (trace) {
        TraceRecord r;
        r.k = k;
        r.agent = a.rep.id;
        r.kind = EventKind::Solve;
        r.fields["status"] = to_string(sl.solver_status);
        r.fields["iters"] = std::to_string(sl.iters);
        r.fields["kkt"] = fmt_double(sl.kkt);
        r.fields["J"] = fmt_double(sl.total);
        r.fields["H"] = fmt_double(sl.stage_cost);
        r.fields["coupling"] = fmt_double(sl.coupling_cost);
        if (job.prob.phi) r.fields["phi"] = fmt_double(*job.prob.phi);
        if (!note.empty()) r.fields["note"] = note;
        if (!sl.most_violated.empty()) r.fields["detail"] = sl.most_violated;
        trace->add(std::move(r));
      }

      if (sl.solver_status != SolverStatus::Infeasible) {
        a.sol = sl;
        a.has_sol = true;
        a.ever_feasible = true;
        a.solved_at = k;
        const TriggerDecision td =
            decide(sl, a.e, pa.trigger, pa.ing, N, k);
        a.phase_m = td.m;
        a.phase_pos = 0;
        a.next_trigger = td.next_instant;
        a.chain_armed = true;
        a.chain_H = sl.stage_cost;
        a.psi_m_eta = td.psi_values[td.m - 1] * pa.cfg.eta;
        a.has_pending = false;
        if (hooks_on) iss_envelope_hook(hooks, a, k, sl, N);
        if (trace) {
          TraceRecord r;
          r.k = k;
          r.agent = a.rep.id;
          r.kind = EventKind::TriggerDecision;
          r.fields["m"] = std::to_string(td.m);
          r.fields["literal_m"] = std::to_string(td.literal_m);
          r.fields["limiting"] = to_string(td.limiting_condition);
          r.fields["next_instant"] = std::to_string(td.next_instant);
          std::ostringstream det;
          det << "ups=";
          for (int i2 = 0; i2 < N; ++i2)
            det << (i2 ? ";" : "") << fmt_double(td.upsilon_values[i2]);
          det << "|psi=";
          for (int i2 = 0; i2 < N; ++i2)
            det << (i2 ? ";" : "") << fmt_double(td.psi_values[i2]);
          r.fields["detail"] = det.str();
          trace->add(std::move(r));
        }
        staged.push_back({a.rep.id, k, sl.s_seq});
      } else if (a.has_sol) {
        // Theorem-2 fallback: adopt the certified candidate for one step.
        a.rep.solver_failures++;
        Mat e_seq;
        Vec s_seq;
        rollout(job.prob, job.warm, e_seq, s_seq);
        const CostParts cp = build_cost(job.prob, job.warm);
        a.sol.u_seq = job.warm;
        a.sol.e_seq = e_seq;
        a.sol.s_seq = s_seq;
        a.sol.stage_cost = cp.H;
        a.sol.coupling_cost = cp.coupling;
        a.sol.total = cp.J;
        a.sol.solver_status = SolverStatus::Infeasible;
        a.solved_at = k;
        a.phase_m = 1;
        a.phase_pos = 0;
        a.next_trigger = k + 1;
        a.chain_H = cp.H;
        a.psi_m_eta = psi(1, pa.ing, N) * pa.cfg.eta;
        a.has_pending = false;
        staged.push_back({a.rep.id, k, s_seq});
      } else {
        // No feasible incumbent yet: apply the least-violating iterate and
        // retry next step.
        if (!a.ever_feasible) a.rep.bootstraps++;
        else a.rep.solver_failures++;
        a.has_pending = true;
        a.pending_u = sl.u_seq.row(0).transpose();
        a.pending_note = note;
        a.next_trigger = k + 1;
        a.chain_armed = false;
        a.phi_ready = false;
        staged.push_back({a.rep.id, k, sl.s_seq});
      }
    }

    for (int oi : order) emit_sample(st[oi], k);

    // Apply scheduled inputs under the true disturbed dynamics.
    for (int oi : order) {
      AgentState& a = st[oi];
      const PreparedAgent& pa = *a.pa;
      Vec u;
      std::string note;
      ApplySource src;
      if (a.mode == Mode::Terminal) {
        u = a.pending_u;
        note = a.pending_note;
        src = ApplySource::Terminal;
        a.rep.terminal_steps++;
      } else if (a.has_pending) {
        u = a.pending_u;
        note = a.pending_note;
        src = ApplySource::Pending;
      } else {
        u = a.sol.u_seq.row(a.phase_pos).transpose();
        note = "mpc";
        src = ApplySource::Incumbent;
      }
      a.has_pending = false;

      const bool chain_step = src == ApplySource::Incumbent && a.chain_armed;
      if (chain_step) {
        a.phi_prev_H = a.chain_H;
        a.phi_e = a.e;
        a.phi_u = u;
        a.phi_ready = true;
      } else {
        a.phi_ready = false;
      }

      const Vec2 ur = reference_inputs(pa.model.path, a.s);
      const Vec d =
          ball_sample(3, pa.cfg.eta * cfg.disturbance_scale, a.rng);
      const Vec e_old = a.e;
      a.e = pa.model.step_true(e_old, u, ur, d);
      a.s = step_sync(a.s, cfg.T, pa.cfg.Y, pa.cfg.Z, u, Vec(ur));
      a.rep.steps++;
      a.rep.e_hist.push_back(a.e);
      a.rep.s_hist.push_back(a.s);

      if (trace) {
        TraceRecord r;
        r.k = k;
        r.agent = a.rep.id;
        r.kind = EventKind::Apply;
        r.fields["u_v"] = fmt_double(u(0));
        r.fields["u_w"] = fmt_double(u(1));
        r.fields["note"] = note;
        trace->add(std::move(r));
      }

      if (hooks_on) {
        if (src == ApplySource::Terminal) {
          const double value = weighted_sq(a.e, pa.ing.P) -
                               weighted_sq(e_old, pa.ing.P) +
                               weighted_sq(e_old, pa.ing.Q_star);
          const double dP = pa.ing.lambda_max_sqrtP * pa.cfg.eta;
          const double bound = 2.0 * dP * pa.ing.eps_r + dP * dP + 1e-9;
          hooks.record(a, k, "terminal-decrease", value <= bound, value, bound);
        } else if (chain_step) {
          const int j = a.phase_pos + 1;
          OcpProblem prob_c =
              make_problem(pa, cfg.T, N, a.e, a.s, {}, std::nullopt);
          const Mat u_cand = warm_start_from(a.sol, j, prob_c);
          Mat e_seq;
          Vec s_seq;
          rollout(prob_c, u_cand, e_seq, s_seq);
          double Hj = weighted_sq(e_seq.row(N).transpose(), pa.ing.P);
          for (int t = 0; t < N; ++t)
            Hj += weighted_sq(Vec(e_seq.row(t).transpose()), pa.ing.Q) +
                  weighted_sq(Vec(u_cand.row(t).transpose()), pa.ing.R);
          const double value = Hj - a.chain_H;
          const double bound = -weighted_sq(e_old, pa.ing.Q) -
                               weighted_sq(u, pa.ing.R) +
                               psi(j, pa.ing, N) * pa.cfg.eta + 1e-6;
          hooks.record(a, k, "h-chain", value <= bound, value, bound);
          a.chain_H = Hj;
          if (j == a.phase_m) {
            const double term = weighted_sq(e_seq.row(N).transpose(), pa.ing.P);
            const double tbound = pa.ing.eps * pa.ing.eps + 1e-9;
            hooks.record(a, k, "phase-end-containment", term <= tbound, term,
                         tbound);
          }
        }
      }

      if (src == ApplySource::Incumbent) a.phase_pos++;
    }

    // Same-step broadcasts become visible at k+1.
    for (const Broadcast& b : staged)
      for (std::size_t i = 0; i < st.size(); ++i) {
        const std::vector<int>& nbs = neighbors_of(st[i].rep.id);
        if (std::find(nbs.begin(), nbs.end(), b.sender) != nbs.end())
          ingest(st[i].buf, b);
      }
    if (trace) {
      for (const Broadcast& b : staged) {
        TraceRecord r;
        r.k = k;
        r.agent = b.sender;
        r.kind = EventKind::Broadcast;
        r.fields["s_first"] = fmt_double(b.s_seq(0));
        r.fields["s_last"] = fmt_double(b.s_seq(b.s_seq.size() - 1));
        trace->add(std::move(r));
      }
    }
    report.steps_completed = k + 1;
  }

  for (int oi : order) emit_sample(st[oi], report.steps_completed);

  for (std::size_t i = 0; i < st.size(); ++i)
    report.agents[i] = std::move(st[order[i]].rep);
  return report;
}

}  // namespace dmpc
