#include <doctest.h>

#include <cmath>
#include <random>

#include "mudich/conjugacy.hpp"
#include "mudich/errors.hpp"

using namespace mudich;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec s1(double a) { return Vec::Constant(1, a); }

LinearSystem scalar_decay() {
  return LinearSystem([](double) { return Mat::Constant(1, 1, -1.0); }, Mat::Identity(1, 1), true);
}

// everything the maps need, owned in one place
struct Pipeline {
  LinearSystem sys;
  TransitionEvaluator ev;
  ProjectionFamily fam;
  GrowthRate rate = GrowthRate::exponential();
  Perturbation p;
  DichotomyCertificate cert{};
  ManifoldSolver m;
  SplitMap sm;
  DecoupledFlows df;
  QuadraticLyapunov q;
  ConjugacyMap cm;
  NonlinearFlow full;
  Pipeline(LinearSystem s, Perturbation pp)
      : sys(std::move(s)), ev(sys), fam(ev), p(std::move(pp)), m(fam, p, rate, cert), sm(m),
        df(m), q(fam, rate, cert, {}, LocalBound{std::exp(1.0), 1, 0}), cm(sm, df, q), full(sys, p) {}
};

Perturbation decaying_sine() {
  return Perturbation(1, [](double t, const Vec& x) {
    return Vec(0.1 * std::exp(-std::abs(t)) * x.array().sin());
  }, 0.1, 1);
}

Perturbation sine2() {
  return Perturbation(2, [](double, const Vec& x) { return v2(0, 0.1 * std::sin(x(0))); }, 0.1, 0);
}

}  // namespace

TEST_CASE("crossing times on the scalar reference") {
  Pipeline s(scalar_decay(), Perturbation::zero(1));
  const double e = std::exp(1.0);
  CHECK(s.cm.ell(Side::stable, 0, s1(e)) == doctest::Approx(1).epsilon(1e-8));
  CHECK(std::abs(s.cm.kappa(Side::stable, 0, s1(e)) - 1) < 1e-8);
  CHECK(std::abs(s.cm.ell(Side::stable, 0, s1(e)) - 1) < 1e-8);
  CHECK(std::abs(s.cm.ell(Side::stable, 0.7, s1(-1)) - 0.7) < 1e-8);
  CHECK(std::abs(s.cm.kappa(Side::stable, -2, s1(1)) + 2) < 1e-8);
  CHECK((s.cm.F(Side::stable, 0.3, s1(1.7)) - s1(1.7)).norm() < 1e-9);
  CHECK(s.cm.F(Side::stable, 0.3, s1(0)).norm() == 0.0);
  CHECK_THROWS_AS(s.cm.ell(Side::stable, 0, s1(0)), PreconditionError);

  // small states cross the level before tau
  auto v = s.q.certificate(uniform_grid(-3, 3, 0.5));
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1), ut(-3, 3);
  for (int i = 0; i < 20; ++i) {
    double tau = ut(rng), x = u(rng) / v.C;
    if (x == 0) continue;
    CHECK(s.cm.ell(Side::stable, tau, s1(x)) < tau);
    CHECK(s.cm.ell(Side::stable, tau, s1(x)) == doctest::Approx(s.cm.kappa(Side::stable, tau, s1(x))));
  }
}

TEST_CASE("scalar perturbed maps") {
  Pipeline s(scalar_decay(), decaying_sine());
  CHECK(s.cm.gate().ok);
  Vec x0 = s1(1.5);
  CHECK((s.cm.L(Side::stable, 0, s.cm.F(Side::stable, 0, x0)) - x0).norm() < 1e-6);
  CHECK((s.cm.F(Side::stable, 0, s.cm.L(Side::stable, 0, x0)) - x0).norm() < 1e-6);
  // the perturbation pushes the crossing away from the linear one
  CHECK(std::abs(s.cm.ell(Side::stable, 0, x0) - s.cm.kappa(Side::stable, 0, x0)) > 1e-3);

  auto x = s.cm.nonlinear(Side::stable, 0, x0);
  double l0 = s.cm.ell(Side::stable, 0, x0);
  for (double t : {-1.5, 0.5, 2.0}) CHECK(std::abs(s.cm.ell(Side::stable, t, x(t)) - l0) < 1e-7);

  auto samples = sample_conj(s.fam, Side::stable, 8, 3, 2, 2, 5);
  auto eq = verify_equivariance(s.cm, Side::stable, samples);
  CHECK(eq.passed);
  CHECK(eq.min_dW > 0);
  auto inv = verify_inverse(s.cm, Side::stable, samples);
  CHECK(inv.passed);
  CHECK(inv.zero == 0.0);
}

TEST_CASE("two-dimensional conjugacy") {
  Pipeline s(LinearSystem::diag_hyperbolic(), sine2());
  auto st = sample_conj(s.fam, Side::stable, 5, 4, 2, 2, 31);
  auto eq = verify_equivariance(s.cm, Side::stable, st);
  CHECK(eq.passed);
  auto un = sample_conj(s.fam, Side::unstable, 5, 4, 2, 2, 32);
  auto equ = verify_equivariance(s.cm, Side::unstable, un);
  CHECK(equ.passed);
  CHECK(verify_inverse(s.cm, Side::unstable, un).passed);

  auto all = sample_conj(s.fam, std::nullopt, 6, 4, 2, 2, 33);
  auto e2e = verify_conjugacy(s.cm, s.full, all);
  CHECK(e2e.passed);
  CHECK(e2e.defect < 1e-4);
  CHECK(e2e.zero == 0.0);

  auto h = check_homeomorphism(s.cm, 0.5, 1.5, 3);
  CHECK(h.mesh == 9);
  CHECK(h.passed);

  GrowthCertificate g{1, 1, 0};
  auto small = sample_conj(s.fam, Side::stable, 6, 2, 0, 0.5, 34);
  auto env = check_envelope(s.cm, s.q.certificate(uniform_grid(-5, 5, 0.5)), s.cert, g, 0, 0.1, small);
  CHECK(env.passed);
  CHECK(env.B == 1.0);
}

TEST_CASE("zero perturbation conjugacy is the identity") {
  Pipeline s(LinearSystem::diag_hyperbolic(), Perturbation::zero(2));
  for (Vec x : {v2(1, 0.5), v2(-0.3, 1.8)}) CHECK((s.cm.G(0.4, x) - x).norm() < 1e-8);
}

TEST_CASE("monotone guard gates the crossing maps") {
  Pipeline s(LinearSystem::diag_hyperbolic(),
             Perturbation(2, [](double, const Vec& x) { return v2(0, 0.3 * std::sin(x(0))); }, 0.3, 0));
  CHECK(s.m.gates().passed());
  CHECK_FALSE(s.cm.gate().ok);
  CHECK_THROWS_AS(s.cm.F(Side::stable, 0, v2(1, 0)), GateError);
}
