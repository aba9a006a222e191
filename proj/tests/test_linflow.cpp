#include <doctest.h>

#include <chrono>
#include <cmath>

#include "mudich/errors.hpp"
#include "mudich/linflow.hpp"

using namespace mudich;

namespace {

double bv_closed(double t, double s) {
  return std::exp(-(t - s) + 0.1 * (t * std::cos(t) - s * std::cos(s) - std::sin(t) + std::sin(s)));
}

LinearSystem scalar(double a) {
  return LinearSystem([a](double) { return Mat::Constant(1, 1, a); }, Mat::Identity(1, 1), true);
}

}  // namespace

TEST_CASE("transition closed forms") {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  Mat m = ev.transition(1, 0);
  CHECK(m(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));
  CHECK(m(1, 1) == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
  CHECK(m(0, 1) == 0.0);
  CHECK(ev.transition(0.7, 0.7) == Mat::Identity(2, 2));

  auto bv = LinearSystem::bv_scalar_stable();
  TransitionEvaluator ebv(bv);
  CHECK(std::abs(ebv.transition(M_PI, 0)(0, 0) - std::exp(-M_PI - 0.1 * M_PI)) < 1e-7);
  for (auto [t, s] : {std::pair{3.0, -2.0}, {-4.0, 1.5}, {0.3, 6.0}})
    CHECK(ebv.transition(t, s)(0, 0) == doctest::Approx(bv_closed(t, s)).epsilon(1e-8));
}

TEST_CASE("anchored transitions match direct integration") {
  auto bv = LinearSystem::bv_scalar_stable();
  TransitionEvaluator ev(bv);
  for (double t : {-3.3, -0.25, 0.0, 1.1, 4.0}) {
    CHECK(ev.from_anchor(t)(0, 0) == doctest::Approx(bv_closed(t, 0)).epsilon(1e-8));
    CHECK(ev.to_anchor(t)(0, 0) == doctest::Approx(bv_closed(0, t)).epsilon(1e-8));
  }
  std::vector<double> ts{2.0, -1.0, 0.5, 0.5, 3.0};
  auto ms = ev.transitions_from(0.5, ts);
  for (std::size_t i = 0; i < ts.size(); ++i)
    CHECK(ms[i](0, 0) == doctest::Approx(bv_closed(ts[i], 0.5)).epsilon(1e-8));
}

TEST_CASE("projection family") {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  CHECK(fam.stable_rank() == 1);
  CHECK(fam.unstable_rank() == 1);
  CHECK(fam(0) == sys.pi0());
  for (double t : {-7.0, -1.3, 2.0, 9.9}) CHECK(fam(t) == sys.pi0());
  Mat m = ev.transition(2, 1);
  CHECK(spectral_norm(fam(2) * m - m * fam(1)) < 1e-7);

  // non-commuting anchor exercises the conjugation path
  LinearSystem shear([](double t) {
    Mat a(2, 2);
    a << -1, 0.5 * std::cos(t), 0, 1;
    return a;
  }, (Mat(2, 2) << 1, -0.2, 0, 0).finished(), false);
  // kernel spanned by (0.2, 1): the solution 0.1 e^t (2 cos t + sin t, 10) at t = 0
  TransitionEvaluator es(shear);
  ProjectionFamily fs(es);
  auto g = uniform_grid(-3, 3, 0.37);
  auto r = check_projection(es, fs, g);
  CHECK(r.idempotence < 1e-7);
  CHECK(r.commutation < 1e-7);
  CHECK(r.derivative < 1e-5);
  CHECK(r.anchor < 1e-7);
  CHECK(fs(0.0) == shear.pi0());
  CHECK(std::abs(fs(2.0)(0, 1) + 0.1 * (2 * std::cos(2.0) + std::sin(2.0))) < 1e-7);

  // a kernel that is not the unstable subspace is reported
  LinearSystem wrong([](double t) {
    Mat a(2, 2);
    a << -1, 0.5 * std::cos(t), 0, 1;
    return a;
  }, (Mat(2, 2) << 1, 0, 0, 0).finished(), false);
  TransitionEvaluator ew(wrong);
  ProjectionFamily fw(ew);
  CHECK(check_projection(ew, fw, g).anchor > 1e-3);
}

TEST_CASE("cocycle and inverse") {
  auto bv = LinearSystem::bv_scalar_stable();
  TransitionEvaluator ev(bv);
  auto r = check_cocycle(ev, 50, 11);
  CHECK(r.samples == 50);
  CHECK(r.cocycle < 1e-6);
  CHECK(r.inverse < 1e-6);
  auto d = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ed(d);
  auto r2 = check_cocycle(ed, 50, 12);
  CHECK(r2.cocycle < 1e-6);
  CHECK(r2.inverse < 1e-6);
}

TEST_CASE("dichotomy certification on the diagonal reference") {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto mu = GrowthRate::exponential();
  auto g = uniform_grid(-10, 10, 0.5);
  auto t0 = std::chrono::steady_clock::now();
  auto rep = verify_dichotomy(ev, fam, mu, DichotomyCertificate{}, g);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(rep.passed);
  CHECK(rep.worst() >= -1e-9);
  CHECK(rep.stable.samples == 41 * 42 / 2);
  CHECK(secs < 2.0);

  DichotomyCertificate tight;
  tight.lambda_s = -1.5;
  auto bad = verify_dichotomy(ev, fam, mu, tight, g);
  CHECK_FALSE(bad.passed);
  CHECK(bad.stable.t > bad.stable.s);

  DichotomyCertificate wrong;
  wrong.lambda_s = 0.1;
  CHECK_THROWS_AS(verify_dichotomy(ev, fam, mu, wrong, g), PreconditionError);
  wrong = {};
  wrong.D = 0.5;
  CHECK_THROWS_AS(wrong.validate(), PreconditionError);
  wrong = {};
  wrong.nu = 1.5;
  CHECK_THROWS_AS(wrong.validate(), PreconditionError);
}

TEST_CASE("bounded growth certification") {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  auto mu = GrowthRate::exponential();
  auto g = uniform_grid(-10, 10, 0.5);
  CHECK(verify_bounded_growth(ev, mu, GrowthCertificate{}, g).passed);
  GrowthCertificate small;
  small.lambda_max = 0.5;
  CHECK_FALSE(verify_bounded_growth(ev, mu, small, g).passed);

  GrowthCertificate loc;
  loc.local = LocalBound{std::exp(2.0), 1.0, 1.0};
  auto g5 = uniform_grid(-5, 5, 0.25);
  auto rep = verify_bounded_growth(ev, mu, loc, g5);
  CHECK(rep.local_checked);
  CHECK(rep.local.samples > 0);
  CHECK(rep.passed);
  loc.local = LocalBound{1.0, 1.0, 1e-3};
  CHECK_FALSE(verify_bounded_growth(ev, mu, loc, g5).passed);
}

TEST_CASE("fitting dichotomy constants") {
  auto mu = GrowthRate::exponential();
  auto g = uniform_grid(-5, 5, 0.5);
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  ProjectionFamily fam(ev);
  auto f = fit_dichotomy_constants(ev, fam, mu, g);
  CHECK(f.require_lambda_s() == doctest::Approx(-1).epsilon(0.02));
  CHECK(f.require_lambda_u() == doctest::Approx(1).epsilon(0.02));
  CHECK(f.nu == 0.0);
  CHECK(f.omega == 0.0);
  CHECK(verify_dichotomy(ev, fam, mu, f.certificate(), g).passed);

  auto sc = scalar(-1.0);
  TransitionEvaluator es(sc);
  ProjectionFamily fs(es);
  auto fsc = fit_dichotomy_constants(es, fs, mu, g);
  CHECK(fsc.require_lambda_s() == doctest::Approx(-1).epsilon(0.02));
  CHECK_FALSE(fsc.lambda_u.has_value());
  CHECK_THROWS_AS(fsc.require_lambda_u(), NotApplicable);

  std::vector<double> one{0.0};
  CHECK_THROWS_AS(fit_dichotomy_constants(ev, fam, mu, one), ConvergenceError);
}

TEST_CASE("system validation") {
  CHECK_THROWS_AS(LinearSystem::preset("nope"), ConfigError);
  std::vector<std::vector<Expr>> a{{Expr::parse("x1")}};
  CHECK_THROWS_AS(LinearSystem(a, Mat::Identity(1, 1)), ConfigError);
  std::vector<std::vector<Expr>> b{{Expr::parse("-1")}};
  CHECK_THROWS_AS(LinearSystem(b, Mat::Constant(1, 1, 0.5)), ConfigError);
  CHECK(LinearSystem::diag_hyperbolic().invariant_anchor());
  CHECK_FALSE(LinearSystem::bv_scalar_stable().autonomous());
}
