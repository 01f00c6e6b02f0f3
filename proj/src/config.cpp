#include "dmpc/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "dmpc/tightening.hpp"

namespace dmpc {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kLipschitzPairs = 4096;
constexpr int kTerminalSamples = 2048;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double num(const Json& j, const std::string& field) {
  if (!j.is_number()) fail("config: " + field + " must be a number");
  return j.get<double>();
}

Vec vec_from(const Json& j, const std::string& field) {
  if (!j.is_array()) fail("config: " + field + " must be an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(i) = num(j[i], field + "[" + std::to_string(i) + "]");
  return v;
}

Mat mat_from(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty())
    fail("config: " + field + " must be a nonempty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty())
    fail("config: " + field + " rows must be nonempty arrays");
  const std::size_t cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      fail("config: " + field + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c)
      m(r, c) = num(j[r][c], field);
  }
  return m;
}

Json mat_to(const Mat& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vec_to(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

BoxSet box_from(const Json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("lo") || !j.contains("hi"))
    fail("config: " + field + " must be an object with lo/hi arrays");
  BoxSet b;
  b.lo = vec_from(j["lo"], field + ".lo");
  b.hi = vec_from(j["hi"], field + ".hi");
  if (b.lo.size() != b.hi.size() || (b.hi - b.lo).minCoeff() <= 0)
    fail("config: " + field + " bounds must satisfy lo < hi componentwise");
  return b;
}

Json box_to(const BoxSet& b) {
  return Json{{"lo", vec_to(b.lo)}, {"hi", vec_to(b.hi)}};
}

template <typename T>
std::map<int, T> int_map_from(const Json& j, const std::string& field,
                              T (*conv)(const Json&, const std::string&)) {
  if (!j.is_object()) fail("config: " + field + " must be an object");
  std::map<int, T> out;
  for (const auto& [key, val] : j.items()) {
    int id = 0;
    try {
      id = std::stoi(key);
    } catch (const std::exception&) {
      fail("config: " + field + " keys must be agent ids, got '" + key + "'");
    }
    out.emplace(id, conv(val, field + "." + key));
  }
  return out;
}

double conv_num(const Json& j, const std::string& field) { return num(j, field); }

std::vector<int> conv_ints(const Json& j, const std::string& field) {
  if (!j.is_array()) fail("config: " + field + " must be an array");
  std::vector<int> out;
  for (const auto& e : j) {
    if (!e.is_number_integer()) fail("config: " + field + " entries must be ids");
    out.push_back(e.get<int>());
  }
  return out;
}

const Json& need(const Json& j, const std::string& key,
                 const std::string& where) {
  if (!j.contains(key)) fail("config: missing field " + where + key);
  return j.at(key);
}

AgentConfig agent_from(const Json& j) {
  AgentConfig a;
  const std::string where = "agents[]: ";
  a.id = need(j, "id", where).get<int>();
  const std::string who = "agent " + std::to_string(a.id) + ": ";
  const Json& path = need(j, "path", who);
  if (!path.is_array() || path.empty())
    fail("config: " + who + "path must be a nonempty array of [amp,rate,phase]");
  for (const auto& t : path) {
    if (!t.is_array() || t.size() != 3)
      fail("config: " + who + "path terms must be [amp,rate,phase]");
    a.path.push_back({t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
  }
  a.h_s = j.contains("h_s") ? num(j["h_s"], who + "h_s") : 1e-4;
  a.Q = mat_from(need(j, "Q", who), who + "Q");
  a.R = mat_from(need(j, "R", who), who + "R");
  a.rho = int_map_from<double>(need(j, "rho", who), who + "rho", conv_num);
  a.mu = int_map_from<double>(need(j, "mu", who), who + "mu", conv_num);
  a.sigma = num(need(j, "sigma", who), who + "sigma");
  a.eps = num(need(j, "eps", who), who + "eps");
  a.eps_r = num(need(j, "eps_r", who), who + "eps_r");
  const Json& eta = need(j, "eta", who);
  if (eta.is_string()) {
    if (eta.get<std::string>() != "admissible")
      fail("config: " + who + "eta must be a number or \"admissible\"");
    a.eta_admissible = true;
  } else {
    a.eta = num(eta, who + "eta");
  }
  a.L_g = num(need(j, "L_g", who), who + "L_g");
  a.L_kappa = num(need(j, "L_kappa", who), who + "L_kappa");
  a.e0 = vec_from(need(j, "e0", who), who + "e0");
  a.s0 = num(need(j, "s0", who), who + "s0");
  a.E = box_from(need(j, "E", who), who + "E");
  a.U = box_from(need(j, "U", who), who + "U");
  a.Y = vec_from(need(j, "Y", who), who + "Y");
  a.Z = vec_from(need(j, "Z", who), who + "Z");
  const Json& ing = need(j, "ingredients", who);
  const std::string mode = need(ing, "mode", who + "ingredients.").get<std::string>();
  if (mode == "synthesize") {
    a.ingredients.mode = IngredientSpec::Mode::Synthesize;
    a.ingredients.margin =
        num(need(ing, "margin", who + "ingredients."), who + "margin");
  } else if (mode == "pinned") {
    a.ingredients.mode = IngredientSpec::Mode::Pinned;
    a.ingredients.P = mat_from(need(ing, "P", who + "ingredients."), who + "P");
    a.ingredients.K = mat_from(need(ing, "K", who + "ingredients."), who + "K");
  } else {
    fail("config: " + who + "ingredients.mode must be synthesize or pinned");
  }
  return a;
}

Json agent_to(const AgentConfig& a) {
  Json j;
  j["id"] = a.id;
  Json path = Json::array();
  for (const auto& t : a.path)
    path.push_back(Json::array({t.amp, t.rate, t.phase}));
  j["path"] = std::move(path);
  j["h_s"] = a.h_s;
  j["Q"] = mat_to(a.Q);
  j["R"] = mat_to(a.R);
  Json rho = Json::object();
  for (const auto& [k, v] : a.rho) rho[std::to_string(k)] = v;
  j["rho"] = std::move(rho);
  Json mu = Json::object();
  for (const auto& [k, v] : a.mu) mu[std::to_string(k)] = v;
  j["mu"] = std::move(mu);
  j["sigma"] = a.sigma;
  j["eps"] = a.eps;
  j["eps_r"] = a.eps_r;
  if (a.eta_admissible) j["eta"] = "admissible";
  else j["eta"] = a.eta;
  j["L_g"] = a.L_g;
  j["L_kappa"] = a.L_kappa;
  j["e0"] = vec_to(a.e0);
  j["s0"] = a.s0;
  j["E"] = box_to(a.E);
  j["U"] = box_to(a.U);
  j["Y"] = vec_to(a.Y);
  j["Z"] = vec_to(a.Z);
  Json ing;
  if (a.ingredients.mode == IngredientSpec::Mode::Synthesize) {
    ing["mode"] = "synthesize";
    ing["margin"] = a.ingredients.margin;
  } else {
    ing["mode"] = "pinned";
    ing["P"] = mat_to(a.ingredients.P);
    ing["K"] = mat_to(a.ingredients.K);
  }
  j["ingredients"] = std::move(ing);
  return j;
}

}  // namespace

const char* to_string(VerifyMode m) {
  switch (m) {
    case VerifyMode::Off: return "off";
    case VerifyMode::Logging: return "logging";
    case VerifyMode::Strict: return "strict";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const std::exception& e) {
    fail(std::string("config parse: ") + e.what());
  }
  ExperimentConfig c;
  c.schema = need(j, "schema", "").get<int>();
  if (c.schema != 1) fail("config: unsupported schema version");
  c.T = num(need(j, "T", ""), "T");
  c.N = need(j, "N", "").get<int>();
  c.steps = need(j, "steps", "").get<int>();
  c.seed = need(j, "seed", "").get<std::uint64_t>();
  if (j.contains("eta") && !j["eta"].is_null())
    c.eta_override = num(j["eta"], "eta");
  c.disturbance_scale = j.contains("disturbance_scale")
                            ? num(j["disturbance_scale"], "disturbance_scale")
                            : 1.0;
  const std::string vm =
      j.contains("verification") ? j["verification"].get<std::string>()
                                 : "logging";
  if (vm == "off") c.verification = VerifyMode::Off;
  else if (vm == "logging") c.verification = VerifyMode::Logging;
  else if (vm == "strict") c.verification = VerifyMode::Strict;
  else fail("config: verification must be off, logging, or strict");
  c.out_dir = j.contains("out_dir") ? j["out_dir"].get<std::string>() : "out";
  c.adjacency = int_map_from<std::vector<int>>(need(j, "adjacency", ""),
                                               "adjacency", conv_ints);
  const Json& agents = need(j, "agents", "");
  if (!agents.is_array() || agents.empty())
    fail("config: agents must be a nonempty array");
  for (const auto& a : agents) c.agents.push_back(agent_from(a));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  Json j;
  j["schema"] = c.schema;
  j["T"] = c.T;
  j["N"] = c.N;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  if (c.eta_override) j["eta"] = *c.eta_override;
  j["disturbance_scale"] = c.disturbance_scale;
  j["verification"] = to_string(c.verification);
  j["out_dir"] = c.out_dir;
  Json adj = Json::object();
  for (const auto& [k, v] : c.adjacency) adj[std::to_string(k)] = v;
  j["adjacency"] = std::move(adj);
  Json agents = Json::array();
  for (const auto& a : c.agents) agents.push_back(agent_to(a));
  j["agents"] = std::move(agents);
  return j.dump(2) + "\n";
}

namespace {

ExperimentConfig sec5_base() {
  ExperimentConfig c;
  c.schema = 1;
  c.T = 0.2;
  c.N = 6;
  c.steps = 100;
  c.seed = 1;
  c.disturbance_scale = 1.0;
  c.verification = VerifyMode::Logging;
  c.out_dir = "out";
  c.adjacency = {{1, {2}}, {2, {1, 3}}, {3, {2}}};

  const double pi = std::numbers::pi;
  const double etas[3] = {1.3163e-4, 1.1748e-4, 1.0963e-4};
  const double sigmas[3] = {0.04, 0.02, 0.04};
  const double lgs[3] = {0.24, 0.28, 0.3072};
  const double lks[3] = {0.44, 0.48, 0.5072};
  const std::vector<std::vector<PhasorTerm>> paths = {
      {{3.0, 0.1, 0.0}, {-2.0, 0.1, 0.0}},
      {{3.0, 0.1, 0.0}},
      {{3.0, 0.1, 0.0}, {2.0, 0.1, pi / 3.0}}};
  const std::vector<Vec> e0s = {
      (Vec(3) << -0.2, 0.2, -0.1).finished(),
      (Vec(3) << 0.1, 0.2, -0.1).finished(),
      (Vec(3) << 0.2, -0.2, -0.1).finished()};

  for (int i = 0; i < 3; ++i) {
    AgentConfig a;
    a.id = i + 1;
    a.path = paths[i];
    a.h_s = 1e-4;
    a.Q = 3.0 * Mat::Identity(3, 3);
    a.R = 0.01 * Mat::Identity(2, 2);
    for (int nb : c.adjacency.at(a.id)) {
      a.rho[nb] = 1.0;
      a.mu[nb] = 1.02;
    }
    a.sigma = sigmas[i];
    a.eps = 0.05;
    a.eps_r = 0.06;
    a.eta = etas[i];
    a.L_g = lgs[i];
    a.L_kappa = lks[i];
    a.e0 = e0s[i];
    a.s0 = 0.0;
    a.E.lo = (Vec(3) << -0.3, -0.3, -pi / 10.0).finished();
    a.E.hi = (Vec(3) << 0.3, 0.3, pi / 10.0).finished();
    a.U.lo = (Vec(2) << -1.0, -1.0).finished();
    a.U.hi = (Vec(2) << 1.0, 1.0).finished();
    a.Y = (Vec(2) << 0.0, -1.0).finished();
    a.Z = (Vec(2) << 0.0, 1.0).finished();
    a.ingredients.mode = IngredientSpec::Mode::Synthesize;
    a.ingredients.margin = 0.30;
    c.agents.push_back(std::move(a));
  }
  return c;
}

}  // namespace

ExperimentConfig builtin_sec5() { return sec5_base(); }

ExperimentConfig builtin_sec5_paper_gains() {
  ExperimentConfig c = sec5_base();
  const std::vector<Mat> Ps = {
      (Mat(3, 3) << 12.2730, 2.8905, 2.9541, 2.8905, 12.3029, 3.0116, 2.9541,
       3.0116, 11.3057).finished(),
      (Mat(3, 3) << 12.2801, 2.9043, 2.9509, 2.9043, 12.3029, 2.9942, 2.9509,
       2.9942, 11.3019).finished(),
      (Mat(3, 3) << 12.2998, 2.8734, 3.0342, 2.8734, 12.3216, 3.0751, 3.0342,
       3.0751, 11.3673).finished()};
  const std::vector<Mat> Ks = {
      (Mat(2, 3) << -1.9457, -1.9725, -1.9827, -1.9484, -1.9753, -1.9858)
          .finished(),
      (Mat(2, 3) << -1.9389, -1.9657, -2.0032, -1.9438, -1.9709, -2.0101)
          .finished(),
      (Mat(2, 3) << -1.9358, -1.9626, -2.0198, -1.9423, -1.9695, -2.0299)
          .finished()};
  for (int i = 0; i < 3; ++i) {
    c.agents[i].ingredients.mode = IngredientSpec::Mode::Pinned;
    c.agents[i].ingredients.P = Ps[i];
    c.agents[i].ingredients.K = Ks[i];
  }
  return c;
}

ExperimentConfig builtin_suite() {
  ExperimentConfig c = sec5_base();
  c.verification = VerifyMode::Strict;
  for (auto& a : c.agents) {
    a.eps_r = 0.052;
    a.eta = 0.0;
    a.eta_admissible = true;
    a.e0 = Vec::Zero(3);
    a.ingredients.margin = 0.20;
  }
  return c;
}

namespace {

std::string who(int id) { return "agent " + std::to_string(id) + ": "; }

void check_spd(const Mat& M, const std::string& what) {
  if (M.rows() != M.cols()) fail(what + " must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    fail(what + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  if (es.eigenvalues().minCoeff() <= 0.0)
    fail(what + " must be positive definite");
}

}  // namespace

Prepared prepare(const ExperimentConfig& cfg) {
  if (cfg.schema != 1) fail("config: unsupported schema version");
  if (cfg.T <= 0) fail("config: sampling period T must be positive");
  if (cfg.N < 1) fail("config: horizon N must be at least 1");
  if (cfg.steps < 0) fail("config: steps must be nonnegative");
  if (cfg.disturbance_scale < 0)
    fail("config: disturbance_scale must be nonnegative");
  if (cfg.agents.empty()) fail("config: no agents");

  std::map<int, const AgentConfig*> by_id;
  for (const auto& a : cfg.agents)
    if (!by_id.emplace(a.id, &a).second)
      fail("config: duplicate agent id " + std::to_string(a.id));
  for (const auto& [i, nbs] : cfg.adjacency) {
    if (!by_id.count(i)) fail("config: adjacency names unknown agent " +
                              std::to_string(i));
    for (int jn : nbs) {
      if (jn == i) fail("config: adjacency must be irreflexive (agent " +
                        std::to_string(i) + ")");
      if (!by_id.count(jn))
        fail("config: adjacency names unknown agent " + std::to_string(jn));
    }
  }

  Prepared prep;
  prep.cfg = cfg;
  for (std::size_t idx = 0; idx < cfg.agents.size(); ++idx) {
    const AgentConfig& a = cfg.agents[idx];
    const std::string w = who(a.id);
    if (a.E.dim() != 3 || a.U.dim() != 2)
      fail(w + "E must be 3-dimensional and U 2-dimensional");
    check_spd(a.Q, w + "stage weight Q");
    check_spd(a.R, w + "stage weight R");
    if (a.Q.rows() != 3 || a.R.rows() != 2)
      fail(w + "Q must be 3x3 and R 2x2");
    if (a.e0.size() != 3) fail(w + "e0 must have 3 components");
    if (!a.E.contains(a.e0)) fail(w + "initial error outside the state set E");
    if (a.Y.size() != 2 || a.Z.size() != 2)
      fail(w + "Y and Z must have 2 components");
    if (!(a.eps > 0)) fail(w + "terminal radius eps must be positive");
    if (!(a.eps < a.eps_r))
      fail(w + "terminal radii must satisfy eps < eps_r");
    if (!(a.sigma > 0 && a.sigma < 1))
      fail(w + "triggering performance factor must lie in (0,1)");
    if (!a.eta_admissible && a.eta < 0)
      fail(w + "disturbance bound eta must be nonnegative");
    if (a.L_g < 0 || a.L_kappa < 0)
      fail(w + "Lipschitz constants must be nonnegative");
    if (a.h_s <= 0) fail(w + "path finite-difference step must be positive");
    const auto adj_it = cfg.adjacency.find(a.id);
    const std::vector<int> nbs =
        adj_it == cfg.adjacency.end() ? std::vector<int>{} : adj_it->second;
    for (int jn : nbs) {
      if (!a.rho.count(jn))
        fail(w + "missing coupling weight rho for neighbor " +
             std::to_string(jn));
      if (a.rho.at(jn) < 0) fail(w + "coupling weight rho must be nonnegative");
      if (!a.mu.count(jn))
        fail(w + "missing extrapolation factor mu for neighbor " +
             std::to_string(jn));
    }

    PreparedAgent pa;
    pa.cfg = a;
    pa.model.T = cfg.T;
    pa.model.path.terms = a.path;
    pa.model.path.h_s = a.h_s;
    try {
      pa.ur0 = reference_inputs(pa.model.path, a.s0);
    } catch (const SingularReferenceError& e) {
      fail(w + std::string("reference path singular at s0: ") + e.what());
    }

    const auto [G, H] = linearize(pa.model, pa.ur0);
    Mat K, P;
    if (a.ingredients.mode == IngredientSpec::Mode::Synthesize) {
      try {
        std::tie(K, P) =
            synthesize_terminal(G, H, a.Q, a.R, a.ingredients.margin);
      } catch (const SynthesisError& e) {
        fail(w + std::string("terminal synthesis: ") + e.what());
      }
    } else {
      P = a.ingredients.P;
      K = a.ingredients.K;
      if (K.rows() != 2 || K.cols() != 3) fail(w + "pinned K must be 2x3");
      check_spd(P, w + "pinned terminal cost P");
      const double sr = spectral_radius(G + H * K);
      if (sr >= 1.0) {
        std::ostringstream os;
        os << w << "terminal gain: closed loop not Schur (spectral radius "
           << sr << ")";
        fail(os.str());
      }
      const Mat Gc = G + H * K;
      const Mat Qstar = a.Q + K.transpose() * a.R * K;
      const Mat gap = Gc.transpose() * P * Gc - P + Qstar;
      const double gmax =
          Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (gap + gap.transpose()))
              .eigenvalues()
              .maxCoeff();
      if (gmax > 1e-8) {
        std::ostringstream os;
        os << w << "terminal cost: linearized Lyapunov decrease violated "
           << "(largest eigenvalue " << gmax << ")";
        fail(os.str());
      }
    }

    pa.ing.K = K;
    pa.ing.P = P;
    pa.ing.Q = a.Q;
    pa.ing.R = a.R;
    pa.ing.Q_star = a.Q + K.transpose() * a.R * K;
    pa.ing.eps = a.eps;
    pa.ing.eps_r = a.eps_r;
    pa.ing.L_g = a.L_g;
    pa.ing.L_kappa = a.L_kappa;
    pa.ing.refresh_spectral();
    weighted_norm_constants(pa.ing, a.E);

    const double ratio =
        max_lipschitz_ratio(pa.model, a.E, a.U, pa.ur0, kLipschitzPairs);
    if (ratio > a.L_g) {
      std::ostringstream os;
      os << w << "Lipschitz bound L_g=" << a.L_g
         << " below the sampled increment ratio " << ratio;
      fail(os.str());
    }

    const ValidationReport vr = validate_terminal_region(
        pa.model, pa.ing, pa.ur0, a.U, kTerminalSamples);
    if (!vr.ok()) {
      const ValidationIssue& worst = vr.issues.front();
      std::ostringstream os;
      os << w << "terminal region validation failed: " << worst.check
         << " violated by " << worst.violation;
      fail(os.str());
    }

    pa.admissible = admissible_eta(pa.ing, cfg.N);
    double eta = a.eta_admissible ? pa.admissible : a.eta;
    if (cfg.eta_override) eta = *cfg.eta_override;
    pa.cfg.eta = eta;
    pa.cfg.eta_admissible = false;
    if (eta > pa.admissible + 1e-15) {
      std::ostringstream os;
      os << w << "disturbance bound eta=" << eta
         << " exceeds the admissible bound " << pa.admissible;
      if (cfg.verification == VerifyMode::Strict) fail(os.str());
      prep.warnings.push_back(os.str());
    }

    pa.trigger = make_trigger_constants(a.sigma, eta, pa.ing, cfg.N);
    upsilon(1, pa.ing, eta, cfg.N);  // surfaces the contraction-factor check

    try {
      pa.boxes = tightened_boxes(a.E, pa.ing, eta, cfg.N);
    } catch (const InfeasibleTightening& e) {
      fail(w + std::string("tightening: ") + e.what());
    }
    if (!check_inclusion({pa.ing.P, a.eps_r}, pa.boxes[cfg.N]))
      fail(w +
           "terminal region not contained in the tightened state set at the "
           "horizon end");

    prep.agents.push_back(std::move(pa));
  }
  return prep;
}

}  // namespace dmpc
