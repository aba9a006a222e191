#include "mudich/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

namespace {

// Stops of [t0, t0 + dir*T]: n uniform points merged with the projection lattice.
// The flag marks lattice points where re-projection is cheap.
struct Stops {
  std::vector<double> t;
  std::vector<char> lattice;
};

Stops make_stops(double t0, double T, double dir, std::size_t n, double lat) {
  std::vector<std::pair<double, char>> v;
  for (std::size_t k = 1; k <= n; ++k) v.emplace_back(t0 + dir * T * double(k) / double(n), 0);
  const double a = std::min(t0, t0 + dir * T), b = std::max(t0, t0 + dir * T);
  for (long k = long(std::ceil(a / lat)); k * lat <= b; ++k) {
    double L = double(k) * lat;
    if (L != t0) v.emplace_back(L, 1);
  }
  std::sort(v.begin(), v.end(), [dir](auto& p, auto& q) { return dir * p.first < dir * q.first; });
  Stops s;
  for (auto& [t, f] : v) {
    if (!s.t.empty() && s.t.back() == t) {
      s.lattice.back() = char(s.lattice.back() | f);
      continue;
    }
    s.t.push_back(t);
    s.lattice.push_back(f);
  }
  return s;
}

Mat side_projection(const ProjectionFamily& fam, double t, bool stable) {
  return stable ? fam(t) : fam.complement(t);
}

bool reproject_at(const ProjectionFamily& fam, const Stops& s, std::size_t i) {
  return fam.evaluator().system().invariant_anchor() || s.lattice[i];
}

}  // namespace

// ---------------------------------------------------------------- strict V

StrictLyapunov::StrictLyapunov(const ProjectionFamily& fam, const GrowthRate& rate,
                               const DichotomyCertificate& cert, double T_sup)
    : fam_(fam), rate_(rate), cert_(cert), T_sup_(T_sup) {
  cert_.validate();
  if (!(T_sup_ > 0)) throw PreconditionError("T_sup must be positive");
}

// sup over [t, t + dir*T] of ||z||, z' = (A - lambda mu'/mu) z, i.e. the weighted norm
// ||Psi(k,t)x|| (mu(k)/mu(t))^-lambda without ever forming the ratio
double StrictLyapunov::sup_weighted(double t, const Vec& x, double lambda, double dir) const {
  if (x.norm() == 0) return 0;
  const auto& sys = fam_.evaluator().system();
  const auto& opt = fam_.evaluator().settings();
  const bool stable = dir > 0;
  auto rhs = [&](double k, const Vec& z) -> Vec {
    return sys.A(k) * z - lambda * rate_.dlog(k) * z;
  };
  double prev = -1;
  for (std::size_t n = 32; n <= (std::size_t(1) << 15); n *= 2) {
    Stops s = make_stops(t, T_sup_, dir, n, fam_.lattice());
    double best = x.norm();
    Vec z = x;
    double k0 = t;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      z = integrate<Vec>(rhs, k0, s.t[i], z, opt);
      k0 = s.t[i];
      if (reproject_at(fam_, s, i)) z = side_projection(fam_, k0, stable) * z;
      best = std::max(best, z.norm());
    }
    if (prev >= 0 && std::abs(best - prev) < 1e-8 * std::max(1.0, best)) return best;
    prev = best;
  }
  return prev;
}

double StrictLyapunov::Vs(double t, const Vec& xs) const {
  if (fam_.stable_rank() == 0) return 0;
  return sup_weighted(t, xs, cert_.lambda_s, +1);
}

double StrictLyapunov::Vu(double t, const Vec& xu) const {
  if (fam_.unstable_rank() == 0) return 0;
  return sup_weighted(t, xu, cert_.lambda_u, -1);
}

double StrictLyapunov::operator()(double t, const Vec& x) const {
  Mat P = fam_(t);
  Vec xs = P * x;
  Vec xu = x - xs;
  return -Vs(t, xs) + Vu(t, xu);
}

StrictConstants strict_constants(const GrowthRate& rate, const DichotomyCertificate& cert,
                                 std::span<const double> window) {
  StrictConstants out;
  for (double tau : window) {
    double dn = rate.log(tau - 1) - rate.log(tau);  // log mu(tau-1)/mu(tau) < 0
    double up = rate.log(tau + 1) - rate.log(tau);
    double cu = std::min(std::exp(cert.lambda_s * dn) - 1, 1 - std::exp(cert.lambda_u * dn));
    double cs = std::min(1 - std::exp(cert.lambda_s * up), std::exp(cert.lambda_u * up) - 1);
    out.tau.push_back(tau);
    out.Cs.push_back(cs);
    out.Cu.push_back(cu);
    out.C = std::max({out.C, 1 / cs, 1 / cu});
  }
  return out;
}

// ---------------------------------------------------------------- quadratic V

QuadraticLyapunov::QuadraticLyapunov(const ProjectionFamily& fam, const GrowthRate& rate,
                                     const DichotomyCertificate& cert, QuadSettings s,
                                     std::optional<LocalBound> local)
    : fam_(fam), rate_(rate), cert_(cert), s_(s), local_(local) {
  cert_.validate();
  const double cap = std::min(-cert_.lambda_s, cert_.lambda_u);
  if (!(s_.eta > 0 && s_.eta < cap)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "eta = %g must lie in (0, min{-lambda_s, lambda_u}) = (0, %g)",
                  s_.eta, cap);
    throw PreconditionError(buf);
  }
  if (!(s_.quad_tol > 0) || !(s_.T_max > 0) || s_.T_cut < 0)
    throw PreconditionError("quadrature settings must be positive");
  if (local_ && !(local_->D_tilde >= 1 && local_->c > 0 && local_->lambda_tilde >= 0))
    throw PreconditionError("local bound needs D_tilde >= 1, c > 0, lambda_tilde >= 0");
  shift_invariant_ =
      rate_.kind() == RateKind::exponential && fam_.evaluator().system().invariant_anchor();
}

namespace {

// smallest T with log mu(t + dir T) - log mu(t) >= need (dir = +1) or <= -need (dir = -1)
std::optional<double> reach(const GrowthRate& rate, double t, double dir, double need,
                            double T_max) {
  auto gain = [&](double T) { return dir * (rate.log(t + dir * T) - rate.log(t)); };
  if (need <= 0) return 1.0;
  double hi = 1;
  while (gain(hi) < need) {
    hi *= 2;
    if (hi > T_max) return gain(T_max) >= need ? std::optional<double>(T_max) : std::nullopt;
  }
  double lo = hi / 2;
  if (gain(lo) >= need) lo = 0;
  for (int i = 0; i < 60 && hi - lo > 1e-6; ++i) {
    double mid = 0.5 * (lo + hi);
    (gain(mid) >= need ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

double QuadraticLyapunov::horizon(double t) const {
  if (s_.T_cut > 0) return s_.T_cut;
  const double ex = 2 * std::max(sgn(t) * cert_.nu, sgn(t) * cert_.omega) * rate_.log(t);
  const double need = (std::log(cert_.D * cert_.D / (2 * s_.eta)) + ex - std::log(s_.quad_tol)) /
                      (2 * s_.eta);
  auto a = reach(rate_, t, +1, need, s_.T_max);
  auto b = reach(rate_, t, -1, need, s_.T_max);
  return std::max(a.value_or(s_.T_max), b.value_or(s_.T_max));
}

bool QuadraticLyapunov::tail_certified(double t) const {
  const double T = horizon(t);
  const double ex = 2 * std::max(sgn(t) * cert_.nu, sgn(t) * cert_.omega) * rate_.log(t);
  const double base = std::log(cert_.D * cert_.D / (2 * s_.eta)) + ex;
  const double ts = base - 2 * s_.eta * (rate_.log(t + T) - rate_.log(t));
  const double tu = base - 2 * s_.eta * (rate_.log(t) - rate_.log(t - T));
  const double lim = std::log(s_.quad_tol) + 1e-9;
  return (fam_.stable_rank() == 0 || ts <= lim) && (fam_.unstable_rank() == 0 || tu <= lim);
}

Mat QuadraticLyapunov::compute(double t) const {
  const int n = fam_.dim();
  const auto& sys = fam_.evaluator().system();
  const auto& opt = s_.ode;
  const double T = horizon(t);
  Mat S = Mat::Zero(n, n);

  // state [Y | Q]: Y' = (A - c mu'/mu) Y, Q' = sgn Y^T Y mu'/mu
  auto side = [&](bool stable) {
    const double c = stable ? cert_.lambda_s + s_.eta : cert_.lambda_u - s_.eta;
    const double dir = stable ? 1 : -1;
    auto rhs = [&](double k, const Mat& y) -> Mat {
      Mat out(n, 2 * n);
      const double r = rate_.dlog(k);
      auto Y = y.leftCols(n);
      out.leftCols(n) = sys.A(k) * Y - c * r * Y;
      out.rightCols(n) = dir * r * (Y.transpose() * Y);
      return out;
    };
    Mat y(n, 2 * n);
    y.leftCols(n) = side_projection(fam_, t, stable);
    y.rightCols(n).setZero();
    // lattice points only; the uniform part is irrelevant here
    Stops st = make_stops(t, T, dir, 1, fam_.lattice());
    double k0 = t;
    for (std::size_t i = 0; i < st.t.size(); ++i) {
      y = integrate<Mat>(rhs, k0, st.t[i], y, opt);
      k0 = st.t[i];
      if (reproject_at(fam_, st, i))
        y.leftCols(n) = side_projection(fam_, k0, stable) * y.leftCols(n);
    }
    return Mat(y.rightCols(n));
  };
  if (fam_.stable_rank() > 0) S += side(true);
  if (fam_.unstable_rank() > 0) S -= side(false);
  return 0.5 * (S + S.transpose());
}

Mat QuadraticLyapunov::S(double t) const {
  const double key = shift_invariant_ ? 0.0 : t;
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  Mat s = compute(key);
  std::lock_guard lock(mu_);
  return cache_.try_emplace(key, std::move(s)).first->second;
}

Mat QuadraticLyapunov::dS(double t, double h) const {
  if (shift_invariant_) return Mat::Zero(fam_.dim(), fam_.dim());
  return (S(t + h) - S(t - h)) / (2 * h);
}

double QuadraticLyapunov::U(double t, const Vec& x) const { return x.dot(S(t) * x); }

double QuadraticLyapunov::V(double t, const Vec& x) const { return UV(t, x).second; }

std::pair<double, double> QuadraticLyapunov::UV(double t, const Vec& x) const {
  double u = U(t, x);
  return {u, -sgn(u) * std::sqrt(std::abs(u))};
}

double QuadraticLyapunov::C_s(double tau) const {
  if (!local_) throw NotApplicable("C_s needs a local growth bound (D_tilde, c, lambda_tilde)");
  const auto& L = *local_;
  const double ls = cert_.lambda_s + s_.eta, lu = cert_.lambda_u - s_.eta;
  auto lm = [&](double a) { return rate_.log(a); };
  double a = (std::exp(-2 * ls * (lm(tau) - lm(tau - 1))) - 1) * (lm(tau + L.c) - lm(tau));
  double b = (1 - std::exp(2 * lu * (lm(tau - 1) - lm(tau)))) * (lm(tau - 1) - lm(tau - 1 - L.c));
  return std::min(a, b) / (L.D_tilde * L.D_tilde);
}

double QuadraticLyapunov::C_u(double tau) const {
  if (!local_) throw NotApplicable("C_u needs a local growth bound (D_tilde, c, lambda_tilde)");
  const auto& L = *local_;
  const double ls = cert_.lambda_s + s_.eta, lu = cert_.lambda_u - s_.eta;
  auto lm = [&](double a) { return rate_.log(a); };
  double a = (1 - std::exp(2 * ls * (lm(tau + 1) - lm(tau)))) * (lm(tau + 1 + L.c) - lm(tau + 1));
  double b = (std::exp(2 * lu * (lm(tau + 1) - lm(tau))) - 1) * (lm(tau) - lm(tau - L.c));
  return std::min(a, b) / (L.D_tilde * L.D_tilde);
}

StrictCertificate QuadraticLyapunov::certificate(std::span<const double> window) const {
  StrictCertificate c;
  c.beta = cert_.lambda_s + s_.eta;
  c.alpha = -(cert_.lambda_u - s_.eta);
  c.eps = std::max(cert_.nu, cert_.omega) / 2;
  c.C = cert_.D / std::sqrt(s_.eta);
  if (local_) {
    c.eps = std::max(c.eps, local_->lambda_tilde);
    for (double tau : window) {
      if (fam_.stable_rank() > 0) c.C = std::max(c.C, 2 / std::sqrt(C_s(tau)));
      if (fam_.unstable_rank() > 0) c.C = std::max(c.C, 2 / std::sqrt(C_u(tau)));
    }
  }
  return c;
}

// ---------------------------------------------------------------- checks

namespace {

void validate_strict(const StrictCertificate& c) {
  if (!(c.C > 0 && c.eps >= 0 && c.alpha < 0 && c.beta < 0))
    throw PreconditionError("strict certificate needs C > 0, eps >= 0, alpha < 0, beta < 0");
}

Vec random_vec(std::mt19937_64& rng, int n, double radius) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  double r = radius * std::pow(u(rng), 1.0 / n);
  return v * (r / std::max(v.norm(), 1e-300));
}

double rel(double diff, double scale) { return diff / std::max(std::abs(scale), 1e-12); }

double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// orthonormal basis of the range of a projection
Mat range_basis(const Mat& P) {
  Eigen::JacobiSVD<Mat> svd(P, Eigen::ComputeThinU);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) r += svd.singularValues()(i) > 0.5;
  return svd.matrixU().leftCols(r);
}

}  // namespace

StrictnessReport check_strictness(const LyapunovFn& V, const TransitionEvaluator& ev,
                                  const ProjectionFamily& fam, const GrowthRate& rate,
                                  const StrictCertificate& cert, const StrictnessSettings& s) {
  validate_strict(cert);
  StrictnessReport rep;
  rep.tolerance = s.tol;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u01;
  for (std::size_t i = 0; i < s.samples; ++i) {
    double tau = s.tau_box * (2 * u01(rng) - 1);
    double t = tau + s.span * u01(rng);
    Vec x = random_vec(rng, fam.dim(), s.radius);
    Mat P = fam(tau);
    Vec xs = P * x, xu = x - xs;
    Mat psi = ev.transition(t, tau);
    ++rep.samples;
    if (fam.unstable_rank() > 0 && xu.norm() > 1e-14) {
      double lhs = V(t, psi * xu);
      double rhs = rate.ratio_pow(tau, t, cert.alpha) * V(tau, xu);
      double m = rel(lhs - rhs, rhs);
      if (m < rep.unstable_growth) rep.unstable_growth = m, rep.unstable_at = {tau, t, xu};
    }
    if (fam.stable_rank() > 0 && xs.norm() > 1e-14) {
      double lhs = std::abs(V(t, psi * xs));
      double rhs = rate.ratio_pow(t, tau, cert.beta) * std::abs(V(tau, xs));
      double m = rel(rhs - lhs, rhs);
      if (m < rep.stable_decay) rep.stable_decay = m, rep.stable_at = {tau, t, xs};
    }
    for (const Vec* y : {&xs, &xu}) {
      if (y->norm() <= 1e-14) continue;
      double lhs = std::abs(V(tau, *y));
      double rhs = std::exp(-sgn(tau) * cert.eps * rate.log(tau)) * y->norm() / cert.C;
      double m = rel(lhs - rhs, rhs);
      if (m < rep.lower_bound) rep.lower_bound = m, rep.lower_at = {tau, tau, *y};
    }
  }
  rep.passed = rep.unstable_growth >= -s.tol && rep.stable_decay >= -s.tol &&
               rep.lower_bound >= -s.tol;
  return rep;
}

MonotonicityReport check_monotonicity(const LyapunovFn& V, const TransitionEvaluator& ev,
                                      double tau, const Vec& x, std::span<const double> grid,
                                      const QuadraticLyapunov* quad, double tol) {
  MonotonicityReport rep;
  std::vector<double> ts;
  for (double t : grid)
    if (t >= tau) ts.push_back(t);
  std::sort(ts.begin(), ts.end());
  if (ts.empty()) throw PreconditionError("monotonicity grid has no point at or after tau");
  auto psi = ev.transitions_from(tau, ts);
  rep.flat = true;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    rep.t.push_back(ts[i]);
    rep.V.push_back(V(ts[i], psi[i] * x));
    if (i == 0) {
      rep.dV.push_back(0);
      continue;
    }
    double d = rep.V[i] - rep.V[i - 1];
    rep.dV.push_back(d);
    double scaled = d / std::max(1.0, std::abs(rep.V[i - 1]));
    if (std::abs(scaled) > tol) rep.flat = false;
    if (scaled < rep.min_increment) rep.min_increment = scaled, rep.t_worst = ts[i];
  }
  if (ts.size() == 1) rep.min_increment = 0;

  if (quad) {
    const auto& fam = quad->family();
    const auto& rate = quad->rate();
    const double c = 2 * (quad->dichotomy().lambda_s + quad->eta());
    Vec xs = fam(tau) * x;
    if (fam.stable_rank() > 0 && xs.norm() > 1e-12) {
      rep.identity_checked = true;
      for (double t : ts) {
        const double h = 1e-3 * std::max(1.0, std::abs(t));
        auto U_at = [&](double s) { return quad->U(s, ev.apply(s, tau, xs)); };
        double fd = (U_at(t + h) - U_at(t - h)) / (2 * h);
        Vec y = ev.apply(t, tau, xs);
        double rhs = rate.dlog(t) * (-y.squaredNorm() + c * quad->U(t, y));
        double err = std::abs(fd - rhs) / std::max(std::abs(rhs), 1e-12);
        rep.identity_error = std::max(rep.identity_error, err);
      }
    }
  }
  rep.passed = rep.min_increment >= -tol && (!rep.identity_checked || rep.identity_error <= 1e-4);
  return rep;
}

SPropertyReport check_S_properties(const QuadraticLyapunov& q, const TransitionEvaluator& ev,
                                   std::span<const double> ts, double tol,
                                   unsigned long long seed) {
  SPropertyReport rep;
  rep.tolerance = tol;
  const auto& fam = q.family();
  const auto& rate = q.rate();
  const auto& c = q.dichotomy();
  const int n = fam.dim();
  const Mat I = Mat::Identity(n, n);
  rep.lower_checked = q.local().has_value();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;

  for (double t : ts) {
    ++rep.samples;
    Mat S = q.S(t);
    rep.symmetry = std::max(rep.symmetry, (S - S.transpose()).norm());
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    int pos = 0, neg = 0;
    for (int i = 0; i < n; ++i) {
      double e = es.eigenvalues()(i);
      rep.min_abs_eig = std::min(rep.min_abs_eig, std::abs(e));
      pos += e > 0;
      neg += e < 0;
    }
    if (pos != fam.stable_rank() || neg != fam.unstable_rank()) rep.inertia_ok = false;

    const double ex = std::max(sgn(t) * c.nu, sgn(t) * c.omega) * rate.log(t);
    double m_a = std::log(c.D * c.D / q.eta()) + ex - std::log(spectral_norm(S));
    if (m_a < rep.bound_margin) rep.bound_margin = m_a, rep.t_bound = t;

    const double r = rate.dlog(t);
    const double scale = std::max(r, 1e-12) * (1 + spectral_norm(S));
    Mat lhs = q.dS(t) + ev.system().A(t).transpose() * S + S * ev.system().A(t);
    Mat printed = -2 * r * (I + c.lambda_u * S);
    Mat derived = -r * I + 2 * (c.lambda_u - q.eta()) * r * S;
    double mp = min_eig(printed - lhs) / scale;
    double md = min_eig(derived - lhs) / scale;
    if (mp < rep.printed_margin) rep.printed_margin = mp, rep.t_printed = t;
    if (md < rep.derived_margin) rep.derived_margin = md, rep.t_derived = t;

    if (rep.lower_checked) {
      const double w = std::exp(-2 * q.local()->lambda_tilde * rate.log(std::abs(t)));
      if (fam.stable_rank() > 0) {
        Mat B = range_basis(fam(t));
        double bound = q.C_s(t) / 4 * w;
        double m = rel(min_eig(B.transpose() * S * B) - bound, bound);
        if (m < rep.stable_lower_margin) rep.stable_lower_margin = m, rep.t_lower = t;
      }
      if (fam.unstable_rank() > 0) {
        Mat B = range_basis(fam.complement(t));
        double bound = q.C_u(t) / 4 * w;
        double m = rel(min_eig(-B.transpose() * S * B) - bound, bound);
        if (m < rep.unstable_lower_margin) rep.unstable_lower_margin = m, rep.t_lower = t;
      }
    }

    // U decreases along the linear flow
    Vec x = random_vec(rng, n, 2);
    double t1 = t + 2 * u01(rng);
    double u0 = q.U(t, x), u1 = q.U(t1, ev.apply(t1, t, x));
    rep.U_monotone =
        std::min(rep.U_monotone, (u0 - u1) / std::max({1.0, std::abs(u0), std::abs(u1)}));
  }
  rep.printed_holds = rep.printed_margin >= -tol;
  rep.passed = rep.symmetry <= 1e-10 && rep.min_abs_eig > 1e-8 && rep.inertia_ok &&
               rep.bound_margin >= -tol && rep.derived_margin >= -tol &&
               (!rep.lower_checked ||
                (rep.stable_lower_margin >= -tol && rep.unstable_lower_margin >= -tol)) &&
               rep.U_monotone >= -tol;
  return rep;
}

RecoveryResult recover_dichotomy(const RecoveryInput& in, const TransitionEvaluator& ev,
                                 const ProjectionFamily& fam, const GrowthRate& rate,
                                 std::span<const double> grid) {
  validate_strict(in.v);
  const double m = std::max(in.Cs, in.Cu) / 4;
  if (!(m > 0)) throw PreconditionError("recovery needs a positive C_s or C_u");
  RecoveryResult res;
  res.B = std::sqrt(2.0) / m;
  auto& d = res.cert;
  d.D = std::max(1.0, std::sqrt(2.0) * res.B * in.v.C * in.v.C);
  d.nu = d.omega = 2 * (in.v.eps + in.lambda_tilde);
  d.lambda_s = in.v.beta + in.v.eps;
  d.lambda_u = -in.v.alpha - in.v.eps;
  d.validate();
  res.cross = verify_dichotomy(ev, fam, rate, d, grid);
  return res;
}

bool monotone_guard(double delta_f, double eta, double D) { return delta_f < eta / (2 * D * D); }

}  // namespace mudich
