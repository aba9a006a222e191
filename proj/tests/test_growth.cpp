#include <doctest.h>

#include <cmath>

#include "mudich/errors.hpp"
#include "mudich/growth.hpp"

using namespace mudich;

TEST_CASE("exponential rate") {
  auto mu = GrowthRate::exponential();
  CHECK(mu(0) == 1.0);
  CHECK(mu(1) == doctest::Approx(2.718281828459045).epsilon(1e-12));
  for (double t : {-2.0, 0.0, 3.0}) CHECK(mu.deriv(t) == mu(t));
  CHECK(mu.log(30) == 30.0);
  CHECK(mu.dlog(-7) == 1.0);
  auto g = uniform_grid(-10, 10, 0.5);
  CHECK(validate(mu, g).passed());
}

TEST_CASE("chi-derived rate t+1") {
  auto mu = GrowthRate::polynomial();
  CHECK(mu(1) == 2.0);
  CHECK(mu(-1) == 0.5);
  CHECK(mu(0) == 1.0);
  CHECK(mu.deriv(-1) == 0.25);
  CHECK(mu.deriv(3) == 1.0);
  for (double t : {0.3, 1.0, 2.5, 7.0, 19.0}) CHECK(mu(t) * mu(-t) == 1.0);
  auto g = uniform_grid(-10, 10, 0.5);
  auto rep = validate(mu, g);
  CHECK(rep.passed());
  CHECK(rep.t_big == 1e4);
  // at the exponential horizon a polynomial rate fails the endpoint proxy
  CHECK_FALSE(validate(mu, g, 20.0).endpoints);
}

TEST_CASE("from_chi rejects a bad anchor") {
  CHECK_THROWS_AS(GrowthRate::from_chi([](double t) { return t + 1.5; }, [](double) { return 1.0; }),
                  PreconditionError);
  CHECK_THROWS_AS(GrowthRate::from_chi([](double t) { return 1 + std::sin(t); },
                                       [](double t) { return std::cos(t); }),
                  PreconditionError);
}

TEST_CASE("validate reports violations") {
  auto neg = GrowthRate::custom([](double t) { return -t; }, [](double) { return -1.0; });
  auto g = uniform_grid(-10, 10, 0.5);
  auto rep = validate(neg, g);
  CHECK_FALSE(rep.passed());
  CHECK_FALSE(rep.positive);
  CHECK_FALSE(rep.violations.empty());

  auto wrong_deriv = GrowthRate::custom([](double t) { return std::exp(t); },
                                        [](double t) { return 1.01 * std::exp(t); });
  auto r2 = validate(wrong_deriv, g);
  CHECK(r2.positive);
  CHECK_FALSE(r2.derivative_consistent);

  CHECK_THROWS_AS(validate(GrowthRate::exponential(), std::vector<double>{0, 1}),
                  PreconditionError);
}

TEST_CASE("log mu increases across a grid") {
  for (auto mu : {GrowthRate::exponential(), GrowthRate::polynomial()}) {
    auto g = uniform_grid(-20, 20, 0.25);
    for (std::size_t i = 1; i < g.size(); ++i) {
      CHECK(mu(g[i]) > 0);
      CHECK(mu.log(g[i]) > mu.log(g[i - 1]));
      CHECK(mu.dlog(g[i]) == doctest::Approx(mu.deriv(g[i]) / mu(g[i])).epsilon(1e-13));
    }
  }
}
