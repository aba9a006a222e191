#include "mudich/nonlinear.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

Perturbation::Perturbation(std::vector<Expr> f, double delta_f, double theta)
    : n_(static_cast<int>(f.size())), delta_f_(delta_f), theta_(theta), exprs_(std::move(f)) {
  if (n_ < 1) throw ConfigError("perturbation needs at least one component");
  if (!(delta_f_ > 0)) throw ConfigError("delta_f must be positive");
  if (!(theta_ >= 0)) throw ConfigError("theta must be nonnegative");
  zero_ = true;
  for (auto& e : exprs_) {
    e.check_bound(n_);
    zero_ = zero_ && e.is_zero_literal();
  }
  f_ = [ex = exprs_](double t, const Vec& x) {
    Vec out(x.size());
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < ex.size(); ++i) out(i) = ex[i].eval(t, xs);
    return out;
  };
}

Perturbation::Perturbation(int n, Field f, double delta_f, double theta, bool zero)
    : n_(n), f_(std::move(f)), delta_f_(delta_f), theta_(theta), zero_(zero) {
  if (!(delta_f_ > 0)) throw ConfigError("delta_f must be positive");
  if (!(theta_ >= 0)) throw ConfigError("theta must be nonnegative");
}

Perturbation Perturbation::zero(int n, double delta_f, double theta) {
  return Perturbation(n, [n](double, const Vec&) { return Vec(Vec::Zero(n)); }, delta_f, theta,
                      true);
}

double phi(const Perturbation& p, const GrowthRate& rate, double t) {
  return p.delta_f() * std::exp(-sgn(t) * p.theta() * rate.log(t)) * rate.dlog(t);
}

AdmissibilityReport check_admissible(const Perturbation& p, const GrowthRate& rate,
                                     const SamplerSettings& s) {
  AdmissibilityReport rep;
  rep.seed = s.seed;
  rep.samples = s.samples;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> T(s.t_min, s.t_max);
  std::uniform_real_distribution<double> C(-s.radius, s.radius);
  const int n = p.dim();
  Vec zero = Vec::Zero(n);
  for (std::size_t i = 0; i < s.samples; ++i) {
    double t = T(rng);
    Vec x(n), y(n);
    for (int k = 0; k < n; ++k) x(k) = C(rng);
    // half the pairs are close together to probe the local constant
    double spread = (i % 2) ? s.radius : 1e-3;
    for (int k = 0; k < n; ++k) y(k) = x(k) + spread * C(rng) / s.radius;
    rep.zero_violation = std::max(rep.zero_violation, p(t, zero).norm());
    double d = (x - y).norm();
    if (d == 0) continue;
    double ratio = (p(t, x) - p(t, y)).norm() / d / phi(p, rate, t);
    if (ratio > rep.lipschitz) {
      rep.lipschitz = ratio;
      rep.t_worst = t;
      rep.x_worst = x;
      rep.y_worst = y;
    }
  }
  rep.passed = rep.zero_violation <= 1e-12 && rep.lipschitz <= 1 + s.lip_slack;
  return rep;
}

NonlinearFlow::NonlinearFlow(const LinearSystem& sys, const Perturbation& p, OdeSettings opt)
    : sys_(sys), p_(p), opt_(opt) {
  if (sys.dim() != p.dim()) throw ConfigError("perturbation and linear part differ in dimension");
}

Vec NonlinearFlow::operator()(double t, double tau, const Vec& x0) const {
  if (t == tau) return x0;
  auto rhs = [this](double s, const Vec& x) -> Vec { return sys_.A(s) * x + p_(s, x); };
  return integrate<Vec>(rhs, tau, t, x0, opt_);
}

std::vector<Vec> NonlinearFlow::through(double tau, const Vec& x0,
                                        std::span<const double> stops) const {
  auto rhs = [this](double s, const Vec& x) -> Vec { return sys_.A(s) * x + p_(s, x); };
  return integrate_through<Vec>(rhs, tau, x0, stops, opt_);
}

std::string GronwallReport::describe_violation() const {
  const bool upper = worst_upper <= worst_lower;
  const GronwallTuple& g = upper ? upper_at : lower_at;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s bound, log-margin %.3e at t=%.6g tau=%.6g", upper ? "upper" : "lower",
                upper ? worst_upper : worst_lower, g.t, g.tau);
  std::string s = buf;
  auto vec = [](const Vec& v) {
    std::string r = "(";
    for (int i = 0; i < v.size(); ++i) {
      char b[32];
      std::snprintf(b, sizeof b, "%s%.6g", i ? ", " : "", v(i));
      r += b;
    }
    return r + ")";
  };
  if (g.x0.size()) s += " x0=" + vec(g.x0) + " y0=" + vec(g.y0);
  return s;
}

std::vector<GronwallTuple> sample_gronwall_tuples(int n, const GronwallSettings& s) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> T(-s.tau_box, s.tau_box);
  std::uniform_real_distribution<double> S(-s.span, s.span);
  std::vector<GronwallTuple> out;
  for (std::size_t i = 0; i < s.tuples; ++i) {
    GronwallTuple g;
    g.tau = T(rng);
    g.t = g.tau + S(rng);
    g.x0 = sample_ball(rng, n, s.radius);
    g.y0 = sample_ball(rng, n, s.radius);
    out.push_back(std::move(g));
  }
  return out;
}

GronwallReport check_gronwall(const NonlinearFlow& flow, const GrowthRate& rate,
                              const GrowthCertificate& cert,
                              std::span<const GronwallTuple> tuples, double tol) {
  cert.validate();
  const Perturbation& p = flow.perturbation();
  const double rate_exp = cert.lambda_max + cert.D * p.delta_f();
  GronwallReport rep;
  rep.tolerance = tol;
  for (auto& g : tuples) {
    double d0 = (g.x0 - g.y0).norm();
    if (d0 == 0) continue;
    double dt = (flow(g.t, g.tau, g.x0) - flow(g.t, g.tau, g.y0)).norm();
    double lr = sgn(g.t - g.tau) * rate_exp * (rate.log(g.t) - rate.log(g.tau));
    double lm = sgn(g.tau) * p.theta() * rate.log(g.tau);
    double ld = std::log(cert.D);
    double upper = ld + lr + lm + std::log(d0);
    double lower = -ld - lr - lm + std::log(d0);
    double ln = std::log(dt);
    double mu_ = upper - ln, ml = ln - lower;
    if (mu_ < rep.worst_upper) rep.worst_upper = mu_, rep.upper_at = g;
    if (ml < rep.worst_lower) rep.worst_lower = ml, rep.lower_at = g;
    ++rep.samples;
  }
  rep.passed = rep.worst_upper >= -tol && rep.worst_lower >= -tol;
  return rep;
}

}  // namespace mudich
