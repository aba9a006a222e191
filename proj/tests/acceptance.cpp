// One line per acceptance criterion; exit status is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "mudich/cli.hpp"
#include "mudich/errors.hpp"

using namespace mudich;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string scenario(const char* name) { return std::string(MUDICH_SCENARIO_DIR) + "/" + name; }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Perturbation sine2(double d) {
  return Perturbation({Expr::parse("0"), Expr::parse(std::to_string(d) + "*sin(x1)")}, d, 0);
}

const DichotomyCertificate kDiag{1, -1, 1, 0, 0};
const LocalBound kLocal{std::exp(1.0), 1, 0};

struct Chain {
  LinearSystem sys;
  TransitionEvaluator ev;
  ProjectionFamily fam;
  GrowthRate rate = GrowthRate::exponential();
  Perturbation p;
  ManifoldSolver m;
  SplitMap sm;
  DecoupledFlows df;
  QuadraticLyapunov q;
  ConjugacyMap cm;
  NonlinearFlow full;
  Chain(LinearSystem s, Perturbation pp)
      : sys(std::move(s)), ev(sys), fam(ev), p(std::move(pp)), m(fam, p, rate, kDiag), sm(m),
        df(m), q(fam, rate, kDiag, {}, kLocal), cm(sm, df, q), full(sys, p) {}
};

struct Result {
  bool ok;
  std::string detail;
};

char buf[512];

Result c1() {
  auto t0 = Clock::now();
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  auto grid = uniform_grid(-10, 10, 0.5);
  auto rep = verify_dichotomy(ev, fam, rate, kDiag, grid, 1e-7);
  double dt = since(t0);
  std::snprintf(buf, sizeof buf, "worst log-margin %.3e, %.2f s", rep.worst(), dt);
  return {rep.worst() >= -1e-7 && dt < 2, buf};
}

Result c2() {
  auto t0 = Clock::now();
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  QuadSettings s;
  s.eta = 0.5;
  QuadraticLyapunov q(fam, rate, kDiag, s);
  Mat ref = Mat::Identity(2, 2);
  ref(1, 1) = -1;
  double err = 0;
  for (double t : {-5.0, 0.0, 5.0}) err = std::max(err, (q.S(t) - ref).cwiseAbs().maxCoeff());
  double dt = since(t0);
  std::snprintf(buf, sizeof buf, "max |S - diag(1,-1)| %.3e, %.2f s", err, dt);
  return {err < 1e-5 && dt < 5, buf};
}

Result c3() {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  QuadraticLyapunov q(fam, rate, kDiag, {}, kLocal);
  std::vector<double> ts;
  for (int i = 0; i < 50; ++i) ts.push_back(-5 + 10.0 * i / 49);
  auto rep = check_S_properties(q, ev, ts, 1e-7, 4);
  std::snprintf(buf, sizeof buf,
                "bound %.3e, derived %.3e, printed %.3e (expected to fail: %s)",
                rep.bound_margin, rep.derived_margin, rep.printed_margin,
                rep.printed_holds ? "held" : "failed");
  return {rep.passed && rep.bound_margin >= -1e-7 && rep.derived_margin >= -1e-7 &&
              !rep.printed_holds,
          buf};
}

Result c4() {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  StrictLyapunov V(fam, rate, kDiag);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ut(-5, 5), ux(-2, 2);
  double err = 0;
  for (int i = 0; i < 20; ++i) {
    double t = ut(rng);
    Vec x = v2(ux(rng), ux(rng));
    err = std::max(err, std::abs(V(t, x) - (-std::abs(x(0)) + std::abs(x(1)))));
  }
  auto st = check_strictness(V.fn(), ev, fam, rate, {1, 0, -1, -1});
  std::snprintf(buf, sizeof buf, "closed-form error %.3e, strictness margins %.3e %.3e %.3e",
                err, st.unstable_growth, st.stable_decay, st.lower_bound);
  return {err < 1e-8 && st.passed, buf};
}

Result c5() {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  auto p = sine2(0.1);
  ManifoldSolver m(fam, p, rate, kDiag);
  m.gates().enforce();
  double ratio = 0, inv = 0, dbl = 0;
  for (double tau : {-2.0, 0.0, 1.5}) {
    for (double a : {0.5, -1.7}) {
      auto pt = m.manifold(Side::stable, tau, v2(a, 0));
      ratio = std::max(ratio, pt.info.worst_ratio);
      inv = std::max(inv, invariance_residual(m, pt, tau + 1));
      LPSettings s2 = m.settings();
      s2.T_h = 2 * pt.info.T_h;
      ManifoldSolver m2(fam, p, rate, kDiag, s2);
      dbl = std::max(dbl, (m2.g_s(tau, v2(a, 0)) - pt.g).norm());
    }
  }
  double g0 = m.g_s(0, v2(0, 0)).norm();
  std::snprintf(buf, sizeof buf, "contraction %.3e, |g_s(0,0)| %.1e, invariance %.3e, doubling %.3e",
                ratio, g0, inv, dbl);
  return {ratio <= 0.25 && g0 < 1e-8 && inv < 1e-5 && dbl < 1e-7, buf};
}

Result c6() {
  auto sys = LinearSystem::diag_hyperbolic();
  auto rate = GrowthRate::exponential();
  auto p = sine2(0.1);
  NonlinearFlow flow(sys, p);
  GronwallSettings gs;
  auto tuples = sample_gronwall_tuples(2, gs);
  auto rep = check_gronwall(flow, rate, GrowthCertificate{1, 1, 0, std::nullopt}, tuples);
  double worst = std::min(rep.worst_upper, rep.worst_lower);
  std::snprintf(buf, sizeof buf, "%zu tuples, worst log-margin %.3e", rep.samples, worst);
  return {rep.passed && rep.samples == 100 && worst >= 0, buf};
}

Result c7() {
  Chain ch(LinearSystem::diag_hyperbolic(), sine2(0.1));
  auto samples = sample_split(2, 50, 5, 2, 2, 7);
  auto rt = check_split_roundtrip(ch.sm, samples, 1e-6);
  std::vector<SplitSample> few(samples.begin(), samples.begin() + 20);
  auto sc = verify_split_conjugation(ch.sm, ch.df, ch.full, few, 1e-5);
  std::snprintf(buf, sizeof buf, "round trips %.3e %.3e, split conjugation %.3e %.3e",
                rt.forward_inverse, rt.inverse_forward, sc.forward, sc.inverse);
  return {rt.passed && sc.passed, buf};
}

Result c8() {
  LinearSystem decay({{Expr::parse("-1")}}, Mat::Identity(1, 1));
  Chain lin(decay, Perturbation::zero(1));
  Vec e = Vec::Constant(1, std::exp(1.0));
  double ell = lin.cm.ell(Side::stable, 0, e), kappa = lin.cm.kappa(Side::stable, 0, e);
  Perturbation decaying(1, [](double t, const Vec& x) {
    return Vec(0.1 * std::exp(-std::abs(t)) * x.array().sin());
  }, 0.1, 1);
  Chain pert(decay, decaying);
  auto s = sample_conj(pert.fam, Side::stable, 10, 3, 2, 2, 8);
  auto eq = verify_equivariance(pert.cm, Side::stable, s, 1e-5, 1e-7);
  std::snprintf(buf, sizeof buf, "ell %.10f, kappa %.10f, transport %.3e", ell, kappa,
                eq.ell_transport);
  return {std::abs(ell - 1) < 1e-8 && std::abs(kappa - 1) < 1e-8 && eq.ell_transport < 1e-7,
          buf};
}

Result c9() {
  Chain ch(LinearSystem::diag_hyperbolic(), sine2(0.1));
  double inv = 0, eqv = 0;
  for (Side side : {Side::stable, Side::unstable}) {
    auto s = sample_conj(ch.fam, side, 30, 5, 2, 2, side == Side::stable ? 91 : 92);
    auto eq = verify_equivariance(ch.cm, side, s, 1e-5);
    eqv = std::max({eqv, eq.F_defect, eq.L_defect});
    std::vector<ConjSample> few(s.begin(), s.begin() + 10);
    auto iv = verify_inverse(ch.cm, side, few, 1e-6);
    inv = std::max({inv, iv.FL, iv.LF});
  }
  auto all = sample_conj(ch.fam, std::nullopt, 20, 5, 2, 2, 93);
  auto e2e = verify_conjugacy(ch.cm, ch.full, all, 1e-4);

  auto t0 = Clock::now();
  RunOptions opt;
  opt.scenario = scenario("diag_reference.json");
  opt.write = false;
  std::ostringstream log;
  int code = run("check", opt, log);
  double dt = since(t0);
  std::snprintf(buf, sizeof buf,
                "inverse %.3e, equivariance %.3e, end-to-end %.3e, check exit %d in %.1f s", inv,
                eqv, e2e.defect, code, dt);
  return {inv < 1e-6 && eqv < 1e-5 && e2e.passed && code == kPass && dt < 120, buf};
}

Result c10() {
  RunOptions opt;
  opt.write = false;
  std::ostringstream log;
  opt.scenario = scenario("diag_strong_perturbation.json");
  int gated = run("conjugate", opt, log);
  bool named = log.str().find("FAILED: conjugate/gate δ̃_f < 1") != std::string::npos;
  opt.scenario = scenario("diag_bad_certificate.json");
  int rejected = run("dichotomy", opt, log);

  auto sys = LinearSystem::diag_hyperbolic();
  auto rate = GrowthRate::exponential();
  auto p = sine2(0.1);
  NonlinearFlow flow(sys, p);
  auto tuples = sample_gronwall_tuples(2, {});
  auto g = check_gronwall(flow, rate, GrowthCertificate{1, 0.5, 0, std::nullopt}, tuples);
  auto why = g.describe_violation();
  std::snprintf(buf, sizeof buf, "gate exit %d (named: %s), bad certificate exit %d, gronwall: %s",
                gated, named ? "yes" : "no", rejected, why.c_str());
  return {gated == kCheckFailed && named && rejected == kInputError && !g.passed &&
              why.find("tau=") != std::string::npos,
          buf};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Result()>>> criteria{
      {"dichotomy certificate on the diagonal reference", c1},
      {"quadratic Lyapunov matrix S(t) = diag(1,-1)", c2},
      {"S-property suite (printed form reported as failing)", c3},
      {"strict Lyapunov function closed form and strictness", c4},
      {"stable manifold solver", c5},
      {"two-sided Gronwall bounds", c6},
      {"splitting round trips and split conjugation", c7},
      {"crossing times and transport", c8},
      {"conjugacy identities and full check run", c9},
      {"negative controls", c10},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += !r.ok;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, r.ok ? "PASS" : "FAIL", criteria[i].first,
                r.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
