#include "mudich/conjugacy.hpp"

#include <cmath>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

CrossingSolver::CrossingSolver(const QuadraticLyapunov& q, CrossingSettings s) : q_(q), s_(s) {
  if (!(s_.root_tol > 0 && s_.max_radius >= 1)) throw PreconditionError("bad crossing settings");
}

double CrossingSolver::solve(Side side, double tau, const Trajectory& x) const {
  const double target = side == Side::stable ? -1 : 1;
  auto W = [&](double t) { return level(t, x(t)) - target; };
  double w0 = W(tau);
  if (std::abs(w0) <= s_.root_tol) return tau;

  // V increases in t: the root is ahead of tau when W(tau) < 0
  const double dir = w0 < 0 ? 1 : -1;
  double near = tau, f_near = w0, far = tau, f_far = w0;
  double vmin = w0, vmax = w0;
  for (double r = 1; r <= s_.max_radius; r *= 2) {
    double t = tau + dir * r, f;
    try {
      f = W(t);
    } catch (const Error&) {
      f = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(f)) break;
    vmin = std::min(vmin, f);
    vmax = std::max(vmax, f);
    if ((f > 0) != (w0 > 0) || f == 0) {
      far = t;
      f_far = f;
      break;
    }
    near = t;
    f_near = f;
  }
  if (far == tau) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "no level crossing near tau=%.6g: V - target ranged over [%.3e, %.3e]",
                  tau, vmin, vmax);
    throw ConvergenceError(buf);
  }

  // Illinois on the bracket, bisection as the fallback
  double a = near, fa = f_near, b = far, fb = f_far;
  if (a > b) std::swap(a, b), std::swap(fa, fb);
  int kept = 0;
  for (int it = 0; it < 300; ++it) {
    double c = it < 200 ? (a * fb - b * fa) / (fb - fa) : 0.5 * (a + b);
    if (!(c > a && c < b)) c = 0.5 * (a + b);
    double fc = W(c);
    if (std::abs(fc) <= s_.root_tol || b - a < 1e-14 * (1 + std::abs(c))) return c;
    if ((fc < 0) == (fa < 0)) {
      a = c, fa = fc;
      if (kept == -1) fb *= 0.5;
      kept = -1;
    } else {
      b = c, fb = fc;
      if (kept == 1) fa *= 0.5;
      kept = 1;
    }
  }
  throw ConvergenceError("level crossing root did not converge");
}

CrossingSolver::Trace CrossingSolver::trace(const Trajectory& x, std::span<const double> grid) const {
  Trace tr;
  for (double t : grid) {
    auto [u, v] = q_.UV(t, x(t));
    tr.t.push_back(t);
    tr.U.push_back(u);
    tr.V.push_back(v);
  }
  tr.min_increment = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < tr.t.size(); ++i) {
    double d = (tr.V[i + 1] - tr.V[i]) / (tr.t[i + 1] - tr.t[i]);
    tr.dV.push_back(d);
    tr.min_increment = std::min(tr.min_increment, d);
  }
  if (!tr.dV.empty()) tr.dV.push_back(tr.dV.back());
  return tr;
}

// ---------------------------------------------------------------- maps

ConjugacyMap::ConjugacyMap(const SplitMap& sm, const DecoupledFlows& df,
                           const QuadraticLyapunov& q, CrossingSettings s)
    : sm_(sm), df_(df), cs_(q, s) {
  const auto& p = sm.solver().perturbation();
  const double D = q.dichotomy().D;
  gate_.delta_f = p.delta_f();
  gate_.bound = q.eta() / (2 * D * D);
  gate_.ok = p.is_zero() || gate_.delta_f < gate_.bound;
}

void ConjugacyMap::enforce() const {
  if (!gate_.ok) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "delta_f = %.6g, bound %.6g", gate_.delta_f, gate_.bound);
    throw GateError("δ_f < η/(2D²)", buf);
  }
}

Mat ConjugacyMap::own(Side side, double t) const {
  return side == Side::stable ? family()(t) : family().complement(t);
}

Trajectory ConjugacyMap::nonlinear(Side side, double tau, const Vec& x0) const {
  return df_.trajectory(side, tau, x0);
}

Trajectory ConjugacyMap::linear(Side side, double tau, const Vec& x0) const {
  const auto& ev = family().evaluator();
  return [this, &ev, side, tau, x0](double t) { return Vec(own(side, t) * ev.apply(t, tau, x0)); };
}

double ConjugacyMap::ell(Side side, double tau, const Vec& x0) const {
  if (zero(x0)) throw PreconditionError("crossing time is undefined at x0 = 0");
  enforce();
  return cs_.solve(side, tau, nonlinear(side, tau, x0));
}

double ConjugacyMap::kappa(Side side, double tau, const Vec& x0) const {
  if (zero(x0)) throw PreconditionError("crossing time is undefined at x0 = 0");
  return cs_.solve(side, tau, linear(side, tau, x0));
}

Vec ConjugacyMap::F(Side side, double tau, const Vec& x0) const {
  if (zero(x0)) return Vec::Zero(x0.size());
  enforce();
  auto x = nonlinear(side, tau, x0);
  double l = cs_.solve(side, tau, x);
  return own(side, tau) * family().evaluator().apply(tau, l, x(l));
}

Vec ConjugacyMap::L(Side side, double tau, const Vec& x0) const {
  if (zero(x0)) return Vec::Zero(x0.size());
  enforce();
  double k = kappa(side, tau, x0);
  Vec v = own(side, k) * family().evaluator().apply(k, tau, x0);
  return df_(side, tau, k, v);
}

Vec ConjugacyMap::F(double tau, const Vec& x) const {
  Mat P = family()(tau);
  Vec xs = P * x;
  return F(Side::stable, tau, xs) + F(Side::unstable, tau, Vec(x - xs));
}

Vec ConjugacyMap::F_inv(double tau, const Vec& y) const {
  Mat P = family()(tau);
  Vec ys = P * y;
  return L(Side::stable, tau, ys) + L(Side::unstable, tau, Vec(y - ys));
}

Vec ConjugacyMap::G(double tau, const Vec& x) const {
  if (zero(x)) return Vec::Zero(x.size());
  return F(tau, sm_(tau, x));
}

Vec ConjugacyMap::G_inv(double tau, const Vec& y) const {
  if (zero(y)) return Vec::Zero(y.size());
  return sm_.inverse(tau, F_inv(tau, y));
}

// ---------------------------------------------------------------- checks

std::vector<ConjSample> sample_conj(const ProjectionFamily& fam, std::optional<Side> side,
                                    std::size_t count, double tau_box, double span,
                                    double radius, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(-tau_box, tau_box), us(-span, span);
  std::vector<ConjSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    ConjSample s;
    s.tau = ut(rng);
    s.t = s.tau + us(rng);
    s.x = sample_ball(rng, fam.dim(), radius);
    if (side) s.x = (*side == Side::stable ? fam(s.tau) : fam.complement(s.tau)) * s.x;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<double> between(double a, double b, int n) {
  std::vector<double> g;
  for (int i = 0; i <= n; ++i) g.push_back(a + (b - a) * i / n);
  return g;
}

}  // namespace

EquivarianceReport verify_equivariance(const ConjugacyMap& cm, Side side,
                                       std::span<const ConjSample> samples, double tol,
                                       double transport_tol) {
  EquivarianceReport rep;
  rep.tolerance = tol;
  rep.transport_tolerance = transport_tol;
  rep.min_dW = std::numeric_limits<double>::infinity();
  const auto& fam = cm.family();
  const auto& ev = fam.evaluator();
  for (auto& s : samples) {
    if (s.x.norm() < cm.crossing().settings().zero_tol) continue;
    auto P = [&](double t) { return side == Side::stable ? fam(t) : fam.complement(t); };
    CrossingRow row{s.tau, s.t, 0, 0, 0, 0, 0};
    auto x = cm.nonlinear(side, s.tau, s.x);
    Vec xt = x(s.t);
    row.ell = cm.ell(side, s.tau, s.x);
    row.kappa = cm.kappa(side, s.tau, s.x);
    Vec lin_t = P(s.t) * ev.apply(s.t, s.tau, s.x);

    double dF = (cm.F(side, s.t, xt) - P(s.t) * ev.apply(s.t, s.tau, cm.F(side, s.tau, s.x))).norm();
    double dL = (cm.L(side, s.t, lin_t) - cm.nonlinear(side, s.tau, cm.L(side, s.tau, s.x))(s.t)).norm();
    double tl = std::abs(cm.ell(side, s.t, xt) - row.ell);
    double tk = std::abs(cm.kappa(side, s.t, lin_t) - row.kappa);
    auto tr = cm.crossing().trace(x, between(std::min(s.tau, row.ell), std::max(s.tau, row.ell) + 1e-3, 16));
    row.defect = std::max(dF, dL);
    row.transport = std::max(tl, tk);
    row.min_dW = tr.min_increment;
    rep.F_defect = std::max(rep.F_defect, dF);
    rep.L_defect = std::max(rep.L_defect, dL);
    rep.ell_transport = std::max(rep.ell_transport, tl);
    rep.kappa_transport = std::max(rep.kappa_transport, tk);
    rep.min_dW = std::min(rep.min_dW, tr.min_increment);
    rep.rows.push_back(row);
  }
  rep.passed = rep.F_defect < tol && rep.L_defect < tol && rep.ell_transport < transport_tol &&
               rep.kappa_transport < transport_tol && rep.min_dW > 0;
  return rep;
}

InverseReport verify_inverse(const ConjugacyMap& cm, Side side,
                             std::span<const ConjSample> samples, double tol) {
  InverseReport rep;
  rep.tolerance = tol;
  for (auto& s : samples) {
    if (s.x.norm() < cm.crossing().settings().zero_tol) continue;
    Vec l = cm.L(side, s.tau, s.x), f = cm.F(side, s.tau, s.x);
    CrossingRow row{s.tau, s.tau, cm.ell(side, s.tau, s.x), cm.kappa(side, s.tau, s.x), 0, 0, 0};
    double fl = (cm.F(side, s.tau, l) - s.x).norm();
    double lf = (cm.L(side, s.tau, f) - s.x).norm();
    double c = std::max(std::abs(row.kappa - cm.ell(side, s.tau, l)),
                        std::abs(row.ell - cm.kappa(side, s.tau, f)));
    row.defect = std::max(fl, lf);
    row.transport = c;
    rep.FL = std::max(rep.FL, fl);
    rep.LF = std::max(rep.LF, lf);
    rep.crossing = std::max(rep.crossing, c);
    rep.rows.push_back(row);
  }
  if (!samples.empty()) {
    Vec z = Vec::Zero(samples.front().x.size());
    rep.zero = cm.F(side, 0, z).norm() + cm.L(side, 0, z).norm();
  }
  rep.passed = rep.FL < tol && rep.LF < tol && rep.crossing < tol && rep.zero == 0;
  return rep;
}

EnvelopeReport check_envelope(const ConjugacyMap& cm, const StrictCertificate& v,
                              const DichotomyCertificate& dich, const GrowthCertificate& growth,
                              double theta, double delta_f, std::span<const ConjSample> samples) {
  EnvelopeReport rep;
  const auto& rate = cm.crossing().lyapunov().rate();
  const double expo = -v.beta / (growth.lambda_max + delta_f * dich.D);
  std::vector<const ConjSample*> used;
  double logB = 0;
  for (auto& s : samples) {
    if (s.x.norm() < cm.crossing().settings().zero_tol) continue;
    double l = cm.ell(Side::stable, s.tau, s.x);
    logB = std::max(logB, sgn(l) * v.eps * rate.log(l));
    used.push_back(&s);
  }
  rep.B = std::exp(logB);
  for (auto* s : used) {
    const double Lt = rate.log(s->tau), sg = sgn(s->tau);
    double log_env = std::log(v.C) + sg * v.eps * Lt +
                     expo * (logB + std::log(v.C * dich.D) + sg * theta * Lt + std::log(s->x.norm()));
    double nf = cm.F(Side::stable, s->tau, s->x).norm();
    double nl = cm.L(Side::stable, s->tau, s->x).norm();
    rep.worst_ratio = std::max(rep.worst_ratio, std::max(nf, nl) / std::exp(log_env));
    ++rep.samples;
  }
  rep.passed = rep.worst_ratio <= 1;
  return rep;
}

EndToEndReport verify_conjugacy(const ConjugacyMap& cm, const NonlinearFlow& full,
                                std::span<const ConjSample> samples, double tol) {
  EndToEndReport rep;
  rep.tolerance = tol;
  const auto& ev = cm.family().evaluator();
  for (auto& s : samples) {
    Vec lhs = cm.G(s.t, full(s.t, s.tau, s.x));
    Vec rhs = ev.apply(s.t, s.tau, cm.G(s.tau, s.x));
    ConjugacyRow row{s.tau, s.t, (lhs - rhs).norm()};
    rep.defect = std::max(rep.defect, row.defect);
    rep.rows.push_back(row);
  }
  if (!samples.empty()) {
    const auto& s = samples.front();
    Vec z = Vec::Zero(s.x.size());
    rep.zero = cm.G(s.tau, z).norm() + cm.G(s.t, full(s.t, s.tau, z)).norm();
  }
  rep.passed = rep.defect < tol && rep.zero == 0;
  return rep;
}

HomeomorphismReport check_homeomorphism(const ConjugacyMap& cm, double tau, double radius,
                                        int per_axis, double tol) {
  HomeomorphismReport rep;
  const int n = cm.family().dim();
  if (per_axis < 2) throw PreconditionError("mesh needs at least two points per axis");
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= per_axis;
  std::vector<Vec> pts, img;
  for (std::size_t k = 0; k < total; ++k) {
    Vec x(n);
    std::size_t r = k;
    for (int i = 0; i < n; ++i, r /= per_axis)
      x(i) = -radius + 2 * radius * double(r % per_axis) / (per_axis - 1);
    pts.push_back(x);
    img.push_back(cm.G(tau, x));
    rep.roundtrip = std::max(rep.roundtrip, (cm.G_inv(tau, img.back()) - x).norm());
  }
  rep.mesh = total;
  rep.min_separation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j)
      rep.min_separation = std::min(rep.min_separation, (img[i] - img[j]).norm());
  rep.passed = rep.min_separation > 1e-9 && rep.roundtrip < tol;
  return rep;
}

}  // namespace mudich
