#include <doctest.h>

#include <cmath>
#include <random>

#include "mudich/errors.hpp"
#include "mudich/nonlinear.hpp"

using namespace mudich;

namespace {

Perturbation sin_triangular() {
  return Perturbation({Expr::parse("0"), Expr::parse("0.1*sin(x1)")}, 0.1, 0.0);
}

LinearSystem scalar(double a) {
  return LinearSystem([a](double) { return Mat::Constant(1, 1, a); }, Mat::Identity(1, 1), true);
}

}  // namespace

TEST_CASE("phi") {
  auto mu = GrowthRate::exponential();
  auto p = Perturbation::zero(1, 0.1, 1.0);
  CHECK(phi(p, mu, 2.0) == doctest::Approx(0.1 * std::exp(-2.0)).epsilon(1e-14));
  CHECK(phi(p, mu, -2.0) == doctest::Approx(0.1 * std::exp(-2.0)).epsilon(1e-14));
  auto poly = GrowthRate::polynomial();
  CHECK(phi(p, poly, 0.0) == doctest::Approx(0.1 * poly.deriv(0.0)));
  auto p0 = Perturbation::zero(1, 0.1, 0.0);
  CHECK(phi(p0, poly, 3.0) == doctest::Approx(0.1 / 4).epsilon(1e-14));
}

TEST_CASE("admissibility sampling") {
  auto mu = GrowthRate::exponential();
  Perturbation good({Expr::parse("0.1*exp(-abs(t))*sin(x1)"), Expr::parse("0.1*exp(-abs(t))*sin(x2)")},
                    0.1, 1.0);
  auto r = check_admissible(good, mu);
  CHECK(r.passed);
  CHECK(r.samples == 2000);
  CHECK(r.lipschitz <= 1.0);

  Perturbation square({Expr::parse("x1^2"), Expr::parse("0")}, 0.1, 0.0);
  auto r2 = check_admissible(square, mu);
  CHECK_FALSE(r2.passed);
  CHECK(r2.lipschitz > 10);

  CHECK(check_admissible(Perturbation::zero(2), mu).passed);

  Perturbation offset({Expr::parse("0.01 + 0*x1")}, 0.1, 0.0);
  CHECK(check_admissible(offset, mu).zero_violation > 0);

  auto tri = check_admissible(sin_triangular(), mu);
  CHECK(tri.passed);
  Perturbation coupled({Expr::parse("0.05*(tanh(x1) + tanh(x2))"),
                        Expr::parse("0.05*(tanh(x1) - tanh(x2))")},
                       0.1, 0.0);
  CHECK(check_admissible(coupled, mu).passed);
}

TEST_CASE("flow") {
  auto sys = LinearSystem::diag_hyperbolic();
  TransitionEvaluator ev(sys);
  auto zero = Perturbation::zero(2);
  NonlinearFlow lin(sys, zero);
  Vec x0(2);
  x0 << 0.3, -1.2;
  CHECK((lin(1.7, -0.4, x0) - ev.transition(1.7, -0.4) * x0).norm() < 1e-8);
  CHECK(lin(0.5, 0.5, x0) == x0);

  auto sc = scalar(-1.0);
  Perturbation p({Expr::parse("0.1*x1")}, 0.1, 0.0);
  NonlinearFlow fl(sc, p);
  CHECK(std::abs(fl(1, 0, Vec::Ones(1))(0) - std::exp(-0.9)) < 1e-8);

  auto tri = sin_triangular();
  NonlinearFlow nf(sys, tri);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-2, 2);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    double tau = U(rng), s = U(rng), t = U(rng);
    Vec x = sample_ball(rng, 2, 1.0);
    Vec direct = nf(t, tau, x);
    Vec group = nf(t, s, nf(s, tau, x));
    worst = std::max(worst, (direct - group).norm() / std::max(1.0, direct.norm()));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("gronwall two-sided bounds") {
  auto sys = LinearSystem::diag_hyperbolic();
  auto mu = GrowthRate::exponential();
  GronwallSettings gs;
  auto tuples = sample_gronwall_tuples(2, gs);
  CHECK(tuples.size() == 100);

  auto zero = Perturbation::zero(2);
  NonlinearFlow lin(sys, zero);
  auto r0 = check_gronwall(lin, mu, GrowthCertificate{}, tuples);
  CHECK(r0.passed);

  auto tri = sin_triangular();
  NonlinearFlow nf(sys, tri);
  auto r = check_gronwall(nf, mu, GrowthCertificate{}, tuples);
  CHECK(r.passed);
  CHECK(r.worst_upper >= 0);
  CHECK(r.worst_lower >= 0);

  GrowthCertificate small;
  small.lambda_max = 0.5;
  auto bad = check_gronwall(nf, mu, small, tuples);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_upper < 0);
  auto msg = bad.describe_violation();
  CHECK(msg.find("upper bound") != std::string::npos);
  CHECK(msg.find("x0=") != std::string::npos);
}

TEST_CASE("perturbation validation") {
  CHECK_THROWS_AS(Perturbation({Expr::parse("x3")}, 0.1, 0), ConfigError);
  CHECK_THROWS_AS(Perturbation({Expr::parse("x1")}, 0.0, 0), ConfigError);
  CHECK_THROWS_AS(Perturbation({Expr::parse("x1")}, 0.1, -1), ConfigError);
  CHECK(Perturbation({Expr::parse("0"), Expr::parse("0")}, 0.1, 0).is_zero());
}
