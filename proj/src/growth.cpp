#include "mudich/growth.hpp"

#include <cmath>
#include <cstdio>

#include "mudich/errors.hpp"

namespace mudich {

std::vector<double> uniform_grid(double a, double b, double step) {
  if (!(step > 0) || b < a) throw PreconditionError("uniform_grid: need a <= b and step > 0");
  auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
  std::vector<double> g;
  g.reserve(n + 2);
  for (long k = 0; k <= n; ++k) g.push_back(a + k * step);
  if (b - g.back() > 1e-9 * step) g.push_back(b);
  return g;
}

std::string to_string(RateKind k) {
  switch (k) {
    case RateKind::exponential: return "exponential";
    case RateKind::polynomial: return "polynomial";
    case RateKind::chi_derived: return "chi-derived";
    case RateKind::custom: return "custom";
  }
  return "?";
}

GrowthRate GrowthRate::exponential() {
  GrowthRate r;
  r.mu_ = [](double t) { return std::exp(t); };
  r.dmu_ = [](double t) { return std::exp(t); };
  r.log_mu_ = [](double t) { return t; };
  r.dlog_ = [](double) { return 1.0; };
  r.kind_ = RateKind::exponential;
  return r;
}

GrowthRate GrowthRate::polynomial() {
  return from_chi([](double t) { return t + 1; }, [](double) { return 1.0; },
                  RateKind::polynomial);
}

GrowthRate GrowthRate::from_chi(Fn chi, Fn dchi, RateKind kind) {
  double c0 = chi(0.0);
  if (std::abs(c0 - 1.0) > 1e-12) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "chi(0) = %.17g, expected 1", c0);
    throw PreconditionError(buf);
  }
  double prev = c0;
  for (int k = 1; k <= 400; ++k) {
    double t = 0.25 * k;
    double c = chi(t);
    if (!(c > prev))
      throw PreconditionError("chi is not strictly increasing near t = " + std::to_string(t));
    prev = c;
  }
  GrowthRate r;
  r.mu_ = [chi](double t) { return t >= 0 ? chi(t) : 1.0 / chi(-t); };
  r.dmu_ = [chi, dchi](double t) {
    if (t >= 0) return dchi(t);
    double c = chi(-t);
    return dchi(-t) / (c * c);
  };
  r.log_mu_ = [chi](double t) { return t >= 0 ? std::log(chi(t)) : -std::log(chi(-t)); };
  r.dlog_ = [chi, dchi](double t) {
    double a = std::abs(t);
    return dchi(a) / chi(a);
  };
  r.kind_ = kind;
  return r;
}

GrowthRate GrowthRate::custom(Fn mu, Fn dmu) {
  GrowthRate r;
  r.mu_ = mu;
  r.dmu_ = dmu;
  r.log_mu_ = [mu](double t) { return std::log(mu(t)); };
  r.dlog_ = [mu, dmu](double t) { return dmu(t) / mu(t); };
  r.kind_ = RateKind::custom;
  return r;
}

double GrowthRate::ratio_pow(double t, double s, double p) const {
  if (p == 0) return 1.0;
  return std::exp(p * (log(t) - log(s)));
}

RateReport validate(const GrowthRate& rate, std::span<const double> grid,
                    std::optional<double> t_big) {
  RateReport rep;
  if (grid.size() < 3) throw PreconditionError("validate: grid needs at least 3 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw PreconditionError("validate: grid must be increasing");

  auto note = [&](bool& flag, const std::string& msg) {
    if (flag) rep.violations.push_back(msg);
    flag = false;
  };
  char buf[160];

  double m0 = rate(0.0);
  if (!(std::abs(m0 - 1.0) <= 1e-12)) {
    std::snprintf(buf, sizeof buf, "mu(0) = %.17g", m0);
    note(rep.anchored, buf);
  }

  double prev = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double t = grid[i];
    double m = rate(t);
    double dm = rate.deriv(t);
    if (!(m > 0) || !std::isfinite(m)) {
      std::snprintf(buf, sizeof buf, "mu(%g) = %g is not positive", t, m);
      note(rep.positive, buf);
    }
    if (i > 0 && !(m > prev)) {
      std::snprintf(buf, sizeof buf, "mu not increasing between %g and %g", grid[i - 1], t);
      note(rep.monotone, buf);
    }
    if (!(dm >= 0)) {
      std::snprintf(buf, sizeof buf, "mu'(%g) = %g is negative", t, dm);
      note(rep.nonnegative_derivative, buf);
    }
    double h = 2e-7 * std::max(1.0, std::abs(t));
    double fd = (rate(t + h) - rate(t - h)) / (2 * h);
    double scaled = std::abs(fd - dm) / (1e-6 * std::abs(dm) + 1e-9);
    if (!std::isfinite(scaled)) scaled = HUGE_VAL;
    if (scaled > rep.worst_fd_error) {
      rep.worst_fd_error = scaled;
      rep.t_worst = t;
    }
    prev = m;
  }
  if (rep.worst_fd_error > 1) {
    std::snprintf(buf, sizeof buf, "finite difference of mu disagrees with mu' at t = %g",
                  rep.t_worst);
    note(rep.derivative_consistent, buf);
  }

  rep.t_big = t_big.value_or(rate.kind() == RateKind::exponential ? 20.0 : 1e4);
  double hi = rate(rep.t_big), lo = rate(-rep.t_big);
  if (!(hi > 1e3) || !(lo < 1e-3)) {
    std::snprintf(buf, sizeof buf, "endpoint proxy failed: mu(%g) = %g, mu(-%g) = %g", rep.t_big,
                  hi, rep.t_big, lo);
    note(rep.endpoints, buf);
  }
  return rep;
}

}  // namespace mudich
