#include "mudich/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

using nlohmann::json;

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"validate", "dichotomy", "lyapunov", "manifold",
                                          "split",    "conjugate", "check"};
  return c;
}

namespace {

struct Ctx {
  const World& w;
  Report& r;
  unsigned long long seed;
  double ts;  // tolerance scale
  const SampleBoxes& sb() const { return w.scenario().samples; }
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * double(i) / double(n - 1);
  return v;
}

std::vector<Side> sides(const World& w) {
  std::vector<Side> s;
  if (w.family().stable_rank() > 0) s.push_back(Side::stable);
  if (w.family().unstable_rank() > 0) s.push_back(Side::unstable);
  return s;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void record_gates(Ctx& c) {
  auto& w = c.w;
  auto g = lp_gates(w.dichotomy(), w.perturbation(), w.family().stable_rank(),
                    w.family().unstable_rank());
  for (auto& x : g.checks) c.r.gate(x.name, x.value, x.applicable, x.ok);
  const double bound = w.scenario().quad.eta / (2 * w.dichotomy().D * w.dichotomy().D);
  c.r.gate("δ_f < η/(2D²)", bound - w.perturbation().delta_f(), true,
           monotone_guard(w.perturbation().delta_f(), w.scenario().quad.eta, w.dichotomy().D));
  c.r.data("gates")["delta_tilde"] = g.delta_tilde;
}

// ---------------------------------------------------------------- validate

void stage_validate(Ctx& c) {
  auto& w = c.w;
  auto grid = c.sb().grid.grid();
  auto rr = validate(w.rate(), grid);
  std::string why;
  for (auto& v : rr.violations) why += (why.empty() ? "" : "; ") + v;
  c.r.check("growth", "rate_properties", double(rr.violations.size()), "<=", 0, why);
  c.r.check("growth", "rate_derivative_fd", rr.worst_fd_error, "<=", c.ts,
            fmt("worst at t=%g", rr.t_worst));
  c.r.data("growth") = {{"kind", to_string(w.rate().kind())}, {"t_big", rr.t_big}};

  SamplerSettings ss;
  ss.samples = c.sb().admissible;
  ss.seed = c.seed;
  ss.t_min = c.sb().grid.a;
  ss.t_max = c.sb().grid.b;
  auto ad = check_admissible(w.perturbation(), w.rate(), ss);
  c.r.check("nonlinear", "perturbation_vanishes_at_zero", ad.zero_violation, "<=", 1e-12 * c.ts);
  c.r.check("nonlinear", "perturbation_lipschitz_envelope", ad.lipschitz, "<=",
            1 + ss.lip_slack * c.ts, fmt("worst ratio/phi at t=%g", ad.t_worst));

  GronwallSettings gs;
  gs.tuples = c.sb().gronwall;
  gs.seed = c.seed + 9;
  gs.tau_box = c.sb().tau_box;
  gs.span = c.sb().span;
  gs.radius = c.sb().radius;
  auto tuples = sample_gronwall_tuples(w.system().dim(), gs);
  auto gr = check_gronwall(w.flow(), w.rate(), w.growth(), tuples, 1e-9 * c.ts);
  c.r.check("nonlinear", "gronwall_bounds", std::min(gr.worst_upper, gr.worst_lower), ">=",
            -1e-9 * c.ts, gr.passed ? "" : gr.describe_violation());

  auto& d = w.dichotomy();
  auto& g = w.growth();
  c.r.data("certificates") = {
      {"dichotomy",
       {{"D", d.D}, {"lambda_s", d.lambda_s}, {"lambda_u", d.lambda_u}, {"nu", d.nu},
        {"omega", d.omega}, {"fitted", w.dichotomy_fitted()}}},
      {"growth",
       {{"D", g.D}, {"lambda_max", g.lambda_max}, {"theta", g.theta}, {"fitted", w.growth_fitted()}}},
      {"local",
       {{"D_tilde", w.local().D_tilde}, {"c", w.local().c}, {"lambda_tilde", w.local().lambda_tilde},
        {"fitted", w.local_fitted()}}}};
  c.r.data("perturbation") = {{"delta_f", w.perturbation().delta_f()},
                              {"theta", w.perturbation().theta()},
                              {"zero", w.perturbation().is_zero()}};
}

// ---------------------------------------------------------------- dichotomy

void stage_dichotomy(Ctx& c) {
  auto& w = c.w;
  auto grid = c.sb().grid.grid();
  const double tol = 1e-7 * c.ts;
  auto dr = verify_dichotomy(w.evaluator(), w.family(), w.rate(), w.dichotomy(), grid, tol);
  auto where = [](const MarginSummary& m) { return fmt("worst at (t,s)=(%g,%g)", m.t, m.s); };
  if (w.family().stable_rank() > 0)
    c.r.check("linflow", "dichotomy_stable_bound", dr.stable.worst, ">=", -tol, where(dr.stable));
  if (w.family().unstable_rank() > 0)
    c.r.check("linflow", "dichotomy_unstable_bound", dr.unstable.worst, ">=", -tol,
              where(dr.unstable));

  auto pr = check_projection(w.evaluator(), w.family(), grid);
  c.r.check("linflow", "projection_idempotent", pr.idempotence, "<=", 1e-8 * c.ts);
  c.r.check("linflow", "projection_commutes_with_flow", pr.commutation, "<=", 1e-6 * c.ts);
  c.r.check("linflow", "projection_derivative", pr.derivative, "<=", 1e-4 * c.ts);
  c.r.check("linflow", "projection_anchor", pr.anchor, "<=", 1e-6 * c.ts);

  auto cr = check_cocycle(w.evaluator(), 50, c.seed + 1, c.sb().window.a, c.sb().window.b);
  c.r.check("linflow", "cocycle", cr.cocycle, "<=", 1e-8 * c.ts);
  c.r.check("linflow", "cocycle_inverse", cr.inverse, "<=", 1e-8 * c.ts);

  auto gr = verify_bounded_growth(w.evaluator(), w.rate(), w.growth(), grid, tol);
  c.r.check("linflow", "bounded_growth", gr.global.worst, ">=", -tol, where(gr.global));
  if (gr.local_checked)
    c.r.check("linflow", "local_bounded_growth", gr.local.worst, ">=", -tol, where(gr.local));

  auto fit = fit_dichotomy_constants(w.evaluator(), w.family(), w.rate(), grid);
  json f{{"D", fit.D}, {"nu", fit.nu}, {"omega", fit.omega}};
  f["lambda_s"] = fit.lambda_s ? json(*fit.lambda_s) : json(nullptr);
  f["lambda_u"] = fit.lambda_u ? json(*fit.lambda_u) : json(nullptr);
  c.r.data("linflow") = {{"fitted", f},
                         {"ranks", {w.family().stable_rank(), w.family().unstable_rank()}}};
}

// ---------------------------------------------------------------- lyapunov

void stage_lyapunov(Ctx& c) {
  auto& w = c.w;
  auto& q = w.quadratic();
  const double tol = 1e-7 * c.ts;
  auto win = c.sb().window;
  auto wgrid = win.grid();

  auto ts = linspace(win.a, win.b, c.sb().s_props);
  auto sp = check_S_properties(q, w.evaluator(), ts, tol, c.seed + 1);
  c.r.check("lyapunov", "S_symmetric", sp.symmetry, "<=", 1e-10 * c.ts);
  c.r.check("lyapunov", "S_nonsingular", sp.min_abs_eig, ">", 1e-8);
  c.r.check("lyapunov", "S_inertia", sp.inertia_ok ? 1 : 0, ">=", 1);
  c.r.check("lyapunov", "S_bound", sp.bound_margin, ">=", -tol, fmt("at t=%g", sp.t_bound));
  c.r.check("lyapunov", "S_derivative_inequality", sp.derived_margin, ">=", -tol,
            fmt("at t=%g", sp.t_derived));
  // the inequality with the mu'/mu factor on the wrong side; reported, expected to fail
  c.r.check("lyapunov", "S_derivative_inequality_printed_form", sp.printed_margin, ">=", -tol,
           fmt("at t=%g; informational", sp.t_printed))
      .gating = false;
  if (sp.lower_checked)
    c.r.check("lyapunov", "S_lower_bounds",
              std::min(sp.stable_lower_margin, sp.unstable_lower_margin), ">=", -tol,
              fmt("at t=%g", sp.t_lower));
  c.r.check("lyapunov", "U_decreasing", sp.U_monotone, ">=", -tol);

  auto& d = w.dichotomy();
  StrictCertificate sc;
  if (w.scenario().strict) {
    sc = *w.scenario().strict;
  } else {
    sc.C = strict_constants(w.rate(), d, wgrid).C;
    sc.eps = std::max(d.nu, d.omega);
    sc.alpha = -d.lambda_u;
    sc.beta = d.lambda_s;
  }
  StrictnessSettings ss;
  ss.samples = c.sb().strictness;
  ss.seed = c.seed + 2;
  ss.tau_box = c.sb().tau_box;
  ss.radius = c.sb().radius;
  ss.tol = tol;
  auto strict_row = [&](const std::string& name, const StrictnessReport& s) {
    c.r.check("lyapunov", name + "_unstable_growth", s.unstable_growth, ">=", -tol,
              fmt("at (tau,t)=(%g,%g)", s.unstable_at.tau, s.unstable_at.t));
    c.r.check("lyapunov", name + "_stable_decay", s.stable_decay, ">=", -tol,
              fmt("at (tau,t)=(%g,%g)", s.stable_at.tau, s.stable_at.t));
    c.r.check("lyapunov", name + "_size_bound", s.lower_bound, ">=", -tol,
              fmt("at tau=%g", s.lower_at.tau));
  };
  StrictLyapunov V(w.family(), w.rate(), d, w.scenario().strict_T_sup);
  strict_row("strict_V", check_strictness(V.fn(), w.evaluator(), w.family(), w.rate(), sc, ss));
  auto qc = q.certificate(wgrid);
  strict_row("quadratic_V",
             check_strictness(q.fn(), w.evaluator(), w.family(), w.rate(), qc, ss));

  const int n = w.system().dim();
  Vec x = Vec::LinSpaced(n, 1, n) * (c.sb().radius / (2 * n));
  auto mono = check_monotonicity(q.fn(), w.evaluator(), 0, x, uniform_grid(0, 3, 0.05), &q);
  c.r.check("lyapunov", "V_increasing_along_flow", mono.min_increment, ">=", -1e-10 * c.ts,
            fmt("at t=%g", mono.t_worst));
  if (mono.identity_checked)
    c.r.check("lyapunov", "U_derivative_identity", mono.identity_error, "<=", 1e-4 * c.ts);
  auto& vt = c.r.table("v-trace");
  const std::size_t m = mono.t.size();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t a = i ? i - 1 : 0, b = std::min(i + 1, m - 1);
    double slope = b > a ? (mono.V[b] - mono.V[a]) / (mono.t[b] - mono.t[a]) : 0;
    vt.rows.push_back({mono.t[i], mono.V[i], slope});
  }

  json out{{"quadratic_certificate",
            {{"C", qc.C}, {"eps", qc.eps}, {"alpha", qc.alpha}, {"beta", qc.beta}}},
           {"strict_certificate", {{"C", sc.C}, {"eps", sc.eps}, {"alpha", sc.alpha}, {"beta", sc.beta}}},
           {"printed_inequality_holds", sp.printed_holds}};
  try {
    RecoveryInput in{qc, w.local().lambda_tilde, 1e300, 1e300};
    for (double t : wgrid) {
      in.Cs = std::min(in.Cs, q.C_s(t));
      in.Cu = std::min(in.Cu, q.C_u(t));
    }
    auto rec = recover_dichotomy(in, w.evaluator(), w.family(), w.rate(), c.sb().grid.grid());
    c.r.check("lyapunov", "recovered_dichotomy", rec.cross.worst(), ">=", -tol);
    out["recovered"] = {{"D", rec.cert.D}, {"lambda_s", rec.cert.lambda_s},
                        {"lambda_u", rec.cert.lambda_u}, {"nu", rec.cert.nu},
                        {"omega", rec.cert.omega}, {"B", rec.B}};
  } catch (const NotApplicable& e) {
    out["recovered"] = e.what();
  }
  c.r.data("lyapunov") = out;
}

// ---------------------------------------------------------------- manifold

struct SidedSample {
  double tau;
  Vec xi;
};

std::vector<SidedSample> side_samples(const ManifoldSolver& m, Side side, std::size_t count,
                                      double tau_box, double radius, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> tau(-tau_box, tau_box);
  const int n = m.family().dim();
  std::vector<SidedSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    double t = tau(rng);
    out.push_back({t, m.own(side, t) * sample_ball(rng, n, radius)});
  }
  return out;
}

void stage_manifold(Ctx& c) {
  auto& w = c.w;
  auto& m = w.manifolds();
  if (!m.gates().applicable) {
    c.r.data("manifold")["trivial"] = true;
    return;
  }
  m.gates().enforce();
  const double ts = c.ts;
  const double dt = m.gates().delta_tilde;
  double worst_ratio = 0, g0 = 0, inv = 0, dbl = 0;
  std::size_t uncertified = 0;
  json per_side;
  bool traj_done = false;
  for (Side side : sides(w)) {
    auto samples = side_samples(m, side, c.sb().manifold, c.sb().tau_box, c.sb().radius,
                                c.seed + 3 + (side == Side::unstable));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto& s = samples[i];
      auto pt = m.manifold(side, s.tau, s.xi);
      worst_ratio = std::max(worst_ratio, pt.info.worst_ratio);
      if (!pt.info.tail_certified) ++uncertified;
      if (i < 3) {
        inv = std::max(inv, invariance_residual(m, pt, s.tau + (side == Side::stable ? 1 : -1)));
        LPSettings s2 = m.settings();
        s2.T_h = 2 * pt.info.T_h;
        ManifoldSolver m2(m.family(), m.perturbation(), m.rate(), m.certificate(), s2);
        dbl = std::max(dbl, (m2.manifold(side, s.tau, s.xi).g - pt.g).norm());
      }
      if (!traj_done) {
        auto& tab = c.r.table("trajectory", w.system().dim());
        for (std::size_t k = 0; k < pt.t.size(); k += 8) {
          std::vector<double> row{pt.t[k]};
          for (int j = 0; j < pt.traj[k].size(); ++j) row.push_back(pt.traj[k][j]);
          tab.rows.push_back(std::move(row));
        }
        traj_done = true;
      }
    }
    g0 = std::max(g0, m.manifold(side, 0.5, Vec::Zero(w.system().dim())).g.norm());

    auto gl = graph_lipschitz(m, side, 0.5, 8, c.sb().radius, c.seed + 5);
    c.r.check("manifolds", "graph_lipschitz_" + to_string(side), gl.empirical, "<=",
              gl.budget * (1 + 0.1 * ts));
    Vec x = Vec::Constant(w.system().dim(), 0.3);
    auto ll = leaf_lipschitz(m, side, 0, x, 8, c.sb().radius, c.seed + 6);
    c.r.check("manifolds", "leaf_lipschitz_" + to_string(side), ll.empirical, "<=",
              ll.budget * (1 + 0.1 * ts));
    auto lp = m.leaf(side, 0.25, m.own(side, 0.25) * Vec::Constant(w.system().dim(), 0.5),
                     Vec::Constant(w.system().dim(), 0.4));
    double li = invariance_residual(m, lp, side == Side::stable ? 1.25 : -0.75);
    c.r.check("manifolds", "leaf_invariance_" + to_string(side), li, "<=", 1e-5 * ts);
    per_side[to_string(side)] = {{"lip_budget", m.lip(side)},
                                 {"horizon_at_0", m.horizon(0, side)}};
  }
  c.r.check("manifolds", "picard_contraction", worst_ratio, "<=", dt + 0.05 * ts,
            fmt("delta_tilde=%g", dt));
  c.r.check("manifolds", "tail_certified", double(uncertified), "<=", 0);
  c.r.check("manifolds", "graph_at_zero", g0, "<=", 1e-8 * ts);
  c.r.check("manifolds", "graph_invariance", inv, "<=", 1e-5 * ts);
  c.r.check("manifolds", "horizon_doubling", dbl, "<=", 1e-7 * ts);

  const double fd_h = 1e-2;
  const double st_tol = 10 * m.settings().fp_tol / fd_h * ts;
  Straightening st(m);
  auto sr = check_straightening(st, 4, 2, 1.5, c.seed + 7, st_tol);
  c.r.check("manifolds", "straightened_stable_invariant", sr.stable_leak, "<=", st_tol);
  c.r.check("manifolds", "straightened_unstable_invariant", sr.unstable_leak, "<=", st_tol);
  c.r.check("manifolds", "straightening_roundtrip", sr.roundtrip, "<=", st_tol);
  per_side["delta_tilde"] = dt;
  c.r.data("manifolds") = per_side;
}

// ---------------------------------------------------------------- split

void stage_split(Ctx& c) {
  auto& w = c.w;
  auto& m = w.manifolds();
  if (!m.gates().applicable) {
    c.r.data("splitting")["trivial"] = true;
    return;
  }
  m.gates().enforce();
  auto& sm = w.split();
  c.r.check("splitting", "inverse_contraction", sm.contraction(), "<", 1);
  auto samples = sample_split(w.system().dim(), c.sb().split, c.sb().tau_box, c.sb().span,
                              c.sb().radius, c.seed + 11);
  auto rt = check_split_roundtrip(sm, samples, 1e-6 * c.ts);
  c.r.check("splitting", "roundtrip", std::max(rt.forward_inverse, rt.inverse_forward), "<",
            1e-6 * c.ts);
  c.r.check("splitting", "fixes_zero", rt.zero, "<", 1e-6 * c.ts);

  auto& df = w.decoupled();
  double sub = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, samples.size()); ++i)
    for (Side side : sides(w)) {
      auto& s = samples[i];
      Vec x0 = m.own(side, s.tau) * s.x;
      std::vector<double> stops{s.tau, s.tau + 0.5 * (s.t - s.tau), s.t};
      sub = std::max(sub, df.subspace_residual(side, s.tau, x0, stops));
    }
  c.r.check("splitting", "decoupled_flows_stay_in_subspace", sub, "<=", 1e-8 * c.ts);

  std::vector<SplitSample> cs(samples.begin(),
                              samples.begin() + std::min(samples.size(), c.sb().split_conj));
  auto sc = verify_split_conjugation(sm, df, w.flow(), cs, 1e-5 * c.ts);
  c.r.check("splitting", "split_conjugation", std::max(sc.forward, sc.inverse), "<",
            1e-5 * c.ts);
  auto& tab = c.r.table("defects");
  for (auto& row : sc.rows) tab.rows.push_back({row.tau, row.t, std::max(row.forward, row.inverse)});
  c.r.data("splitting") = {{"contraction", sm.contraction()},
                           {"iteration_bound", sm.iteration_bound()},
                           {"samples", samples.size()}};
}

// ---------------------------------------------------------------- conjugate

void stage_conjugate(Ctx& c) {
  auto& w = c.w;
  auto& m = w.manifolds();
  if (m.gates().applicable) m.gates().enforce();
  auto& cm = w.conjugacy();
  cm.enforce();
  const double ts = c.ts;
  auto& fam = w.family();
  auto& ctab = c.r.table("crossings");
  json out;
  for (Side side : sides(w)) {
    const std::string sn = to_string(side);
    auto s = sample_conj(fam, side, c.sb().conjugacy, c.sb().tau_box, c.sb().span, c.sb().radius,
                         c.seed + 13 + (side == Side::unstable));
    auto eq = verify_equivariance(cm, side, s, 1e-5 * ts, 1e-7 * ts);
    c.r.check("conjugacy", "F_equivariance_" + sn, eq.F_defect, "<", 1e-5 * ts);
    c.r.check("conjugacy", "L_equivariance_" + sn, eq.L_defect, "<", 1e-5 * ts);
    c.r.check("conjugacy", "crossing_transport_" + sn, std::max(eq.ell_transport, eq.kappa_transport),
              "<", 1e-7 * ts);
    c.r.check("conjugacy", "V_monotone_" + sn, eq.min_dW, ">", 0);
    for (auto& r : eq.rows)
      ctab.rows.push_back({r.tau, r.t, r.ell, r.kappa, r.defect, r.transport, r.min_dW});

    std::vector<ConjSample> few(s.begin(), s.begin() + std::min<std::size_t>(10, s.size()));
    auto iv = verify_inverse(cm, side, few, 1e-6 * ts);
    c.r.check("conjugacy", "F_L_inverse_" + sn, std::max(iv.FL, iv.LF), "<", 1e-6 * ts);
    c.r.check("conjugacy", "crossing_consistency_" + sn, iv.crossing, "<", 1e-6 * ts);
    c.r.check("conjugacy", "fixes_zero_" + sn, iv.zero, "<=", 0);
  }

  if (fam.stable_rank() > 0) {
    auto& q = w.quadratic();
    auto small = sample_conj(fam, Side::stable, 6, std::min(2.0, c.sb().tau_box), 0, 0.5,
                             c.seed + 17);
    auto env = check_envelope(cm, q.certificate(c.sb().window.grid()), w.dichotomy(), w.growth(),
                              w.perturbation().theta(), w.perturbation().delta_f(), small);
    c.r.check("conjugacy", "size_envelope", env.worst_ratio, "<=", 1, fmt("B=%g", env.B));
  }

  auto all = sample_conj(fam, std::nullopt, c.sb().e2e, c.sb().tau_box, c.sb().span,
                         c.sb().radius, c.seed + 19);
  auto e2e = verify_conjugacy(cm, w.flow(), all, 1e-4 * ts);
  c.r.check("conjugacy", "end_to_end", e2e.defect, "<", 1e-4 * ts);
  c.r.check("conjugacy", "end_to_end_zero", e2e.zero, "<=", 0);
  auto& dtab = c.r.table("defects");
  for (auto& r : e2e.rows) dtab.rows.push_back({r.tau, r.t, r.defect});

  auto hm = check_homeomorphism(cm, 0.5, c.sb().radius * 0.75, c.sb().mesh, 1e-6 * ts);
  c.r.check("conjugacy", "injective_on_mesh", hm.min_separation, ">", 1e-9);
  c.r.check("conjugacy", "inverse_on_mesh", hm.roundtrip, "<", 1e-6 * ts);
  out["monotone_gate"] = {{"delta_f", cm.gate().delta_f}, {"bound", cm.gate().bound}};
  out["mesh_points"] = hm.mesh;
  c.r.data("conjugacy") = out;
}

using Stage = void (*)(Ctx&);

const std::vector<std::pair<std::string, Stage>>& stages() {
  static const std::vector<std::pair<std::string, Stage>> s{
      {"validate", stage_validate}, {"dichotomy", stage_dichotomy}, {"lyapunov", stage_lyapunov},
      {"manifold", stage_manifold}, {"split", stage_split},         {"conjugate", stage_conjugate}};
  return s;
}

void guarded(const std::string& name, Stage f, Ctx& c) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    f(c);
  } catch (const GateError& e) {
    c.r.fail(name, "gate " + e.gate, e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const PreconditionError&) {
    throw;
  } catch (const ParseError&) {
    throw;
  } catch (const DomainError& e) {
    throw ConfigError(std::string("formula left its domain: ") + e.what());
  } catch (const NotApplicable& e) {
    c.r.data(name)["not_applicable"] = e.what();
  } catch (const Error& e) {
    c.r.fail(name, "numerical_breakdown", e.what());
  }
  std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  c.r.timing(name, dt.count());
}

}  // namespace

Report run_stage(const std::string& command, const World& w, unsigned long long seed,
                 double tol_scale) {
  if (!(tol_scale > 0)) throw ConfigError("--tol-scale must be positive");
  Report r(command);
  Ctx c{w, r, seed, tol_scale};
  r.meta() = {{"scenario", w.scenario().source}, {"seed", seed}, {"tol_scale", tol_scale},
              {"dim", w.system().dim()}};
  record_gates(c);
  bool found = false;
  for (auto& [name, f] : stages())
    if (command == "check" || command == name) {
      guarded(name, f, c);
      found = true;
    }
  if (!found) throw ConfigError("unknown command '" + command + "'");
  return r;
}

int run(const std::string& command, const RunOptions& opt, std::ostream& log) {
  try {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
      throw ConfigError("unknown command '" + command + "'");
    Scenario sc = load_scenario(opt.scenario);
    if (command == "check" && !sc.seed_given && !opt.seed)
      throw ConfigError("check needs a seed: set \"seed\" in the scenario or pass --seed");
    const unsigned long long seed = opt.seed ? *opt.seed : sc.seed;
    World w(sc);
    Report r = run_stage(command, w, seed, opt.tol_scale);
    for (auto& ck : r.checks()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", ck.value);
      log << (ck.passed ? "PASS " : ck.gating ? "FAIL " : "note ") << ck.module << "/" << ck.name
          << " " << buf;
      if (!ck.relation.empty()) {
        std::snprintf(buf, sizeof buf, "%.3e", ck.threshold);
        log << " " << ck.relation << " " << buf;
      }
      if (!ck.passed && !ck.detail.empty()) log << "  (" << ck.detail << ")";
      log << "\n";
    }
    for (auto& [stage, sec] : r.timings()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f s", sec);
      log << "time " << stage << " " << buf << "\n";
    }
    if (opt.write) {
      for (auto& f : r.write(opt.out ? *opt.out : sc.out)) log << "wrote " << f << "\n";
    }
    if (auto f = r.first_failure()) {
      log << "FAILED: " << f->module << "/" << f->name;
      if (!f->detail.empty()) log << ": " << f->detail;
      log << "\n";
      return kCheckFailed;
    }
    log << "all checks passed\n";
    return kPass;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
  } catch (const PreconditionError& e) {
    log << "precondition violated: " << e.what() << "\n";
  } catch (const ParseError& e) {
    log << "parse error: " << e.what() << "\n";
  } catch (const DomainError& e) {
    log << "domain error: " << e.what() << "\n";
  } catch (const json::exception& e) {
    log << "json error: " << e.what() << "\n";
  }
  return kInputError;
}

}  // namespace mudich
