#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "mudich/errors.hpp"
#include "mudich/lyapunov.hpp"

using namespace mudich;

namespace {

// y = R(t) z with z' = diag(-1, 1) z; R rotates at angular speed w.  pi(t) = R diag(1,0) R^T and
// S(t) = R diag(1,-1) R^T exactly, so this exercises the non-invariant path.
Mat rot(double t, double w) {
  Mat r(2, 2);
  r << std::cos(w * t), -std::sin(w * t), std::sin(w * t), std::cos(w * t);
  return r;
}

LinearSystem rotating(double w) {
  auto a = [w](double t) {
    Mat R = rot(t, w);
    Mat J(2, 2);
    J << 0, -w, w, 0;
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = -1;
    D(1, 1) = 1;
    return Mat(J + R * D * R.transpose());
  };
  Mat pi0 = Mat::Zero(2, 2);
  pi0(0, 0) = 1;
  return LinearSystem(a, pi0, false);
}

Mat diag_S() {
  Mat s = Mat::Zero(2, 2);
  s(0, 0) = 1;
  s(1, 1) = -1;
  return s;
}

LinearSystem scalar(double a) {
  return LinearSystem([a](double) { return Mat::Constant(1, 1, a); }, Mat::Identity(1, 1), true);
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct Diag {
  LinearSystem sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev{sys};
  ProjectionFamily fam{ev};
  GrowthRate rate = GrowthRate::exponential();
  DichotomyCertificate cert{};
};

}  // namespace

TEST_CASE("quadratic S on the diagonal reference") {
  Diag d;
  auto t0 = std::chrono::steady_clock::now();
  QuadraticLyapunov q(d.fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  for (double t : {-5.0, 0.0, 5.0}) CHECK((q.S(t) - diag_S()).norm() < 1e-5);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 5);
  CHECK(q.shift_invariant());
  CHECK(q.tail_certified(0));
  CHECK((q.S(0) - diag_S()).norm() < 1e-6);
}

TEST_CASE("quadratic S without the shift-invariant shortcut") {
  auto sys = rotating(0.3);
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  QuadraticLyapunov q(fam, rate, DichotomyCertificate{});
  CHECK_FALSE(q.shift_invariant());
  for (double t : {-2.3, 0.0, 1.7}) {
    Mat R = rot(t, 0.3);
    CHECK((q.S(t) - R * diag_S() * R.transpose()).norm() < 1e-6);
  }
}

TEST_CASE("scalar stable S and eta range") {
  auto sys = scalar(-1);
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto rate = GrowthRate::exponential();
  QuadraticLyapunov q(fam, rate, DichotomyCertificate{});
  CHECK(q.S(3.0)(0, 0) == doctest::Approx(1).epsilon(1e-6));

  Diag d;
  QuadSettings bad;
  bad.eta = 1.5;
  CHECK_THROWS_AS(QuadraticLyapunov(d.fam, d.rate, d.cert, bad), PreconditionError);
  bad.eta = 0;
  CHECK_THROWS_AS(QuadraticLyapunov(d.fam, d.rate, d.cert, bad), PreconditionError);
}

TEST_CASE("U and V values") {
  Diag d;
  QuadraticLyapunov q(d.fam, d.rate, d.cert);
  auto [u, v] = q.UV(0, v2(2, 1));
  CHECK(u == doctest::Approx(3).epsilon(1e-6));
  CHECK(v == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-6));
  auto [u0, v0] = q.UV(0, v2(0, 0));
  CHECK(u0 == 0.0);
  CHECK(v0 == 0.0);
  auto [uc, vc] = q.UV(0, v2(1, 1));
  CHECK(std::abs(uc) < 1e-7);
  CHECK(std::abs(vc) < 1e-3);
}

TEST_CASE("S property suite") {
  Diag d;
  QuadraticLyapunov q(d.fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  auto ts = uniform_grid(-5, 5, 10.0 / 49);
  REQUIRE(ts.size() == 50);
  auto rep = check_S_properties(q, d.ev, ts);
  CHECK(rep.bound_margin >= 0);
  CHECK(rep.derived_margin >= -1e-7);
  CHECK_FALSE(rep.printed_holds);
  CHECK(rep.printed_margin < -0.5);
  CHECK(rep.inertia_ok);
  CHECK(rep.lower_checked);
  CHECK(rep.stable_lower_margin > 0);
  CHECK(rep.unstable_lower_margin > 0);
  CHECK(rep.U_monotone >= -1e-9);
  CHECK(rep.passed);

  auto sys = rotating(0.3);
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  QuadraticLyapunov qr(fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  auto few = uniform_grid(-2, 2, 1);
  auto rr = check_S_properties(qr, ev, few, 1e-5);
  CHECK(rr.passed);
  CHECK_FALSE(rr.printed_holds);
}

TEST_CASE("strictness constants of the quadratic construction") {
  Diag d;
  QuadraticLyapunov q(d.fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  const double want = std::exp(-2.0) * (1 - std::exp(-1.0));
  for (double tau : {-3.0, 0.0, 2.5}) {
    CHECK(q.C_s(tau) == doctest::Approx(want).epsilon(1e-12));
    CHECK(q.C_u(tau) == doctest::Approx(want).epsilon(1e-12));
  }
  QuadraticLyapunov bare(d.fam, d.rate, d.cert);
  CHECK_THROWS_AS(bare.C_s(0), NotApplicable);

  auto sc = strict_constants(d.rate, d.cert, uniform_grid(-2, 2, 1));
  CHECK(sc.C == doctest::Approx(1 / (1 - std::exp(-1.0))));
}

TEST_CASE("strict V on the diagonal reference") {
  Diag d;
  StrictLyapunov V(d.fam, d.rate, d.cert);
  CHECK(V(0, v2(2, 3)) == doctest::Approx(1).epsilon(1e-9));
  CHECK(V(0, v2(0, 0)) == 0.0);
  CHECK(V(0, v2(1, 0)) == doctest::Approx(-1).epsilon(1e-9));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 20; ++i) {
    double t = u(rng);
    Vec x = v2(u(rng), u(rng));
    CHECK(std::abs(V(t, x) - (-std::abs(x(0)) + std::abs(x(1)))) < 1e-8);
  }

  auto sys = rotating(0.3);
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  StrictLyapunov Vr(fam, d.rate, d.cert);
  for (double t : {-1.2, 0.4}) {
    Mat R = rot(t, 0.3);
    Vec x = v2(0.7, -1.1);
    Vec z = R.transpose() * x;
    CHECK(std::abs(Vr(t, x) - (-std::abs(z(0)) + std::abs(z(1)))) < 1e-7);
  }
}

TEST_CASE("strictness conditions") {
  Diag d;
  StrictLyapunov V(d.fam, d.rate, d.cert);
  auto rep = check_strictness(V.fn(), d.ev, d.fam, d.rate, StrictCertificate{1, 0, -1, -1});
  CHECK(rep.passed);
  CHECK(rep.samples == 20);
  CHECK(std::abs(rep.stable_decay) < 1e-7);
  CHECK(std::abs(rep.lower_bound) < 1e-7);

  auto bad = check_strictness(V.fn(), d.ev, d.fam, d.rate, StrictCertificate{1, 0, -1, -2});
  CHECK_FALSE(bad.passed);
  CHECK(bad.stable_decay < 0);

  QuadraticLyapunov q(d.fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  auto window = uniform_grid(-5, 5, 0.5);
  auto qc = q.certificate(window);
  CHECK(qc.beta == doctest::Approx(-0.5));
  CHECK(qc.alpha == doctest::Approx(-0.5));
  auto qr = check_strictness(q.fn(), d.ev, d.fam, d.rate, qc);
  CHECK(qr.passed);

  CHECK_THROWS_AS(check_strictness(V.fn(), d.ev, d.fam, d.rate, StrictCertificate{1, 0, 1, -1}),
                  PreconditionError);
}

TEST_CASE("monotonicity along the linear flow") {
  Diag d;
  StrictLyapunov V(d.fam, d.rate, d.cert);
  QuadraticLyapunov q(d.fam, d.rate, d.cert);
  auto grid = uniform_grid(0, 3, 0.25);
  auto s = check_monotonicity(V.fn(), d.ev, 0, v2(1.5, 0), grid);
  CHECK(s.passed);
  CHECK(s.min_increment > 0);
  auto u = check_monotonicity(V.fn(), d.ev, 0, v2(0, 0.5), grid);
  CHECK(u.passed);
  auto qm = check_monotonicity(q.fn(), d.ev, 0, v2(1, 0.3), grid, &q);
  CHECK(qm.passed);
  CHECK(qm.identity_checked);
  CHECK(qm.identity_error < 1e-4);

  auto zero = scalar(0);
  TransitionEvaluator ez(zero);
  ProjectionFamily fz(ez);
  StrictLyapunov Vz(fz, d.rate, DichotomyCertificate{}, 5);
  Vec x = Vec::Constant(1, 0.5);
  auto flat = check_monotonicity(Vz.fn(), ez, 0, x, grid);
  CHECK(flat.flat);
  CHECK(flat.passed);
  auto st = check_strictness(Vz.fn(), ez, fz, d.rate, StrictCertificate{1, 0, -1, -1});
  CHECK_FALSE(st.passed);
}

TEST_CASE("dichotomy recovered from Lyapunov data") {
  Diag d;
  QuadraticLyapunov q(d.fam, d.rate, d.cert, {}, LocalBound{std::exp(1.0), 1, 0});
  auto grid = uniform_grid(-5, 5, 0.5);
  RecoveryInput in{StrictCertificate{1, 0, -1, -1}, 0, q.C_s(0), q.C_u(0)};
  auto r = recover_dichotomy(in, d.ev, d.fam, d.rate, grid);
  CHECK(r.cert.lambda_s == -1.0);
  CHECK(r.cert.lambda_u == 1.0);
  CHECK(r.cert.D >= 1);
  CHECK(r.cross.passed);

  in.v.C = 10;
  auto big = recover_dichotomy(in, d.ev, d.fam, d.rate, grid);
  CHECK(big.cert.D == doctest::Approx(100 * r.cert.D));
  CHECK(big.cross.passed);

  in.v.C = 1;
  in.v.eps = 0.1;
  auto loose = recover_dichotomy(in, d.ev, d.fam, d.rate, grid);
  CHECK(loose.cert.nu > 0);
  CHECK(loose.cross.passed);
}

TEST_CASE("monotone guard") {
  CHECK(monotone_guard(0.2, 0.5, 1));
  CHECK_FALSE(monotone_guard(0.25, 0.5, 1));
  CHECK_FALSE(monotone_guard(0.1, 0.5, 2));
}
