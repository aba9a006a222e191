#include "mudich/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

std::string to_string(Side s) { return s == Side::stable ? "stable" : "unstable"; }

// ---------------------------------------------------------------- gates

bool LPGates::passed() const { return first_failure() == nullptr; }

const Gate* LPGates::first_failure() const {
  for (auto& g : checks)
    if (g.applicable && !g.ok) return &g;
  return nullptr;
}

void LPGates::enforce() const {
  if (auto g = first_failure()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "slack %.6g (delta_tilde = %.6g)", g->value, delta_tilde);
    throw GateError(g->name, buf);
  }
}

LPGates lp_gates(const DichotomyCertificate& c, const Perturbation& p, int ds, int du) {
  LPGates out;
  out.applicable = ds > 0 && du > 0;
  const double theta = p.theta();
  const double a = -c.lambda_s + c.nu - theta;
  const double b = c.lambda_u - theta + c.omega;
  out.delta_tilde = a > 0 && b > 0 ? p.delta_f() * c.D * (1 / a + 1 / b)
                                   : std::numeric_limits<double>::infinity();
  auto add = [&](const char* name, double v) {
    out.checks.push_back({name, v, out.applicable, !out.applicable || v > 0});
  };
  add("θ ≥ max{ν,ω}", theta - std::max(c.nu, c.omega) + 1e-15);
  add("λ_s < ν−θ", a);
  add("λ_u > θ−ω", b);
  add("δ̃_f < 1", 1 - out.delta_tilde);
  return out;
}

// ---------------------------------------------------------------- grid

struct ManifoldSolver::Grid {
  double tau = 0, dir = 1, h = 0;
  std::size_t N = 0;
  std::vector<double> t;
  std::vector<Mat> Mf, Mb;  // Psi(t_{k+1}, t_k) and its inverse
  std::vector<Mat> S, C;    // own-side projection and complement per node
  std::vector<std::array<int, 4>> stencil;
  std::vector<std::array<Mat, 4>> Wf, Wb;
};

namespace {

using Grid = ManifoldSolver::Grid;

Mat psi(const Grid& g, int a, int b) {
  const int n = static_cast<int>(g.Mf[0].rows());
  Mat M = Mat::Identity(n, n);
  if (a > b)
    for (int j = b; j < a; ++j) M = g.Mf[j] * M;
  else
    for (int j = b - 1; j >= a; --j) M = g.Mb[j] * M;
  return M;
}

struct Sweep {
  std::vector<Vec> z;
  SolveInfo info;
};

// Picard iteration of z = L + int_{t_0}^{t} S f - int_{t}^{t_N} C f on the oriented grid
template <class F>
Sweep lp_solve(const Grid& g, const Vec& v0, F&& field, const LPSettings& s) {
  const std::size_t N = g.N;
  std::vector<Vec> L(N + 1), A(N + 1), B(N + 1), Fk(N + 1);
  L[0] = g.S[0] * v0;
  for (std::size_t k = 0; k < N; ++k) L[k + 1] = g.S[k + 1] * (g.Mf[k] * L[k]);
  Sweep out;
  out.z = L;
  out.info.nodes = N + 1;
  double scale = 0;
  for (auto& v : L) scale = std::max(scale, v.norm());
  for (int it = 1; it <= s.max_iter; ++it) {
    for (std::size_t k = 0; k <= N; ++k) Fk[k] = field(k, out.z[k]);
    A[0] = Vec::Zero(v0.size());
    for (std::size_t k = 0; k < N; ++k) {
      Vec acc = g.Mf[k] * A[k];
      for (int i = 0; i < 4; ++i) acc += g.Wf[k][i] * Fk[g.stencil[k][i]];
      A[k + 1] = g.S[k + 1] * acc;
    }
    B[N] = Vec::Zero(v0.size());
    for (std::size_t k = N; k-- > 0;) {
      Vec acc = g.Mb[k] * B[k + 1];
      for (int i = 0; i < 4; ++i) acc += g.Wb[k][i] * Fk[g.stencil[k][i]];
      B[k] = g.C[k] * acc;
    }
    double delta = 0;
    for (std::size_t k = 0; k <= N; ++k) {
      Vec z = L[k] + A[k] - B[k];
      delta = std::max(delta, (z - out.z[k]).norm());
      scale = std::max(scale, z.norm());
      out.z[k] = std::move(z);
    }
    auto& d = out.info.deltas;
    if (!d.empty() && d.back() > 1e-13 * (1 + scale))
      out.info.worst_ratio = std::max(out.info.worst_ratio, delta / d.back());
    d.push_back(delta);
    out.info.iterations = it;
    if (delta < s.fp_tol) return out;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "Lyapunov-Perron iteration stalled: last delta %.3e after %d sweeps",
                out.info.deltas.back(), s.max_iter);
  throw ConvergenceError(buf);
}

}  // namespace

ManifoldSolver::ManifoldSolver(const ProjectionFamily& fam, const Perturbation& p,
                               const GrowthRate& rate, const DichotomyCertificate& cert,
                               LPSettings s, OdeSettings ode)
    : fam_(fam), p_(p), rate_(rate), cert_(cert), s_(s),
      flow_(fam.evaluator().system(), p, ode),
      gates_(lp_gates(cert, p, fam.stable_rank(), fam.unstable_rank())) {
  cert_.validate();
  if (!(s_.step > 0 && s_.fp_tol > 0 && s_.max_iter > 0 && s_.T_cap > 0 && s_.T_h >= 0))
    throw PreconditionError("LP settings must be positive");
}

bool ManifoldSolver::trivial() const { return fam_.stable_rank() == 0 || fam_.unstable_rank() == 0; }

Mat ManifoldSolver::own(Side side, double tau) const {
  return side == Side::stable ? fam_(tau) : fam_.complement(tau);
}

Mat ManifoldSolver::other(Side side, double tau) const {
  return side == Side::stable ? fam_.complement(tau) : fam_(tau);
}

double ManifoldSolver::lip(Side side) const {
  const double th = p_.theta();
  const double den = side == Side::stable ? cert_.lambda_u - th + cert_.omega
                                          : -cert_.lambda_s + cert_.nu - th;
  return p_.delta_f() * cert_.D * cert_.D / ((1 - gates_.delta_tilde) * den);
}

double ManifoldSolver::tail_bound(double tau, double T, Side side) const {
  const double th = p_.theta();
  const double Lt = rate_.log(tau);
  const double pre = cert_.D * p_.delta_f() * s_.M_ref;
  if (side == Side::stable) {
    // int_{tau+T}^inf (mu(tau)/mu(k))^{lambda_u} mu^{sign(k)(omega-theta)-1} mu' dk in s = log mu
    const double lu = cert_.lambda_u;
    const double cn = -lu + th - cert_.omega, cp = -lu + cert_.omega - th;
    if (!(cn < 0 && cp < 0)) return std::numeric_limits<double>::infinity();
    const double lo = tau + T, a = rate_.log(lo);
    double I;
    if (lo < 0)
      I = (std::exp(lu * Lt) - std::exp(lu * Lt + cn * a)) / cn - std::exp(lu * Lt) / cp;
    else
      I = -std::exp(lu * Lt + cp * a) / cp;
    return pre * I;
  }
  const double ls = cert_.lambda_s;
  const double cn = -ls + th - cert_.nu, cp = -ls + cert_.nu - th;
  if (!(cn > 0 && cp > 0)) return std::numeric_limits<double>::infinity();
  const double hi = tau - T, b = rate_.log(hi);
  double I;
  if (hi > 0)
    I = std::exp(ls * Lt) / cn + (std::exp(ls * Lt + cp * b) - std::exp(ls * Lt)) / cp;
  else
    I = std::exp(ls * Lt + cn * b) / cn;
  return pre * I;
}

double ManifoldSolver::horizon(double tau, Side side) const {
  if (s_.T_h > 0) return s_.T_h;
  if (tail_bound(tau, s_.T_cap, side) > s_.fp_tol) return s_.T_cap;
  double lo = 0, hi = s_.T_cap;
  while (hi - lo > 1e-3) {
    double mid = 0.5 * (lo + hi);
    (tail_bound(tau, mid, side) <= s_.fp_tol ? hi : lo) = mid;
  }
  return std::max(hi, 4 * s_.step);
}

std::shared_ptr<const Grid> ManifoldSolver::grid(double tau, Side side, double T) const {
  const auto key = std::make_tuple(tau, side == Side::stable ? 1 : -1, T);
  {
    std::lock_guard lock(mu_);
    if (auto it = grids_.find(key); it != grids_.end()) return it->second;
  }
  const auto& ev = fam_.evaluator();
  const auto& sys = ev.system();
  const int n = fam_.dim();
  const Mat I = Mat::Identity(n, n);
  auto g = std::make_shared<Grid>();
  g->tau = tau;
  g->dir = side == Side::stable ? 1 : -1;
  g->N = std::max<std::size_t>(3, std::size_t(std::ceil(T / s_.step - 1e-9)));
  g->h = T / double(g->N);
  const std::size_t N = g->N;
  for (std::size_t k = 0; k <= N; ++k) g->t.push_back(tau + g->dir * g->h * double(k));
  g->t[N] = tau + g->dir * T;

  if (sys.autonomous()) {
    Mat m = ev.transition(g->t[1], g->t[0]);
    Mat mi = m.inverse();
    g->Mf.assign(N, m);
    g->Mb.assign(N, mi);
  } else {
    for (std::size_t k = 0; k < N; ++k) {
      g->Mf.push_back(ev.transition(g->t[k + 1], g->t[k]));
      g->Mb.push_back(g->Mf.back().inverse());
    }
  }
  for (std::size_t k = 0; k <= N; ++k) {
    Mat P = sys.invariant_anchor() ? sys.pi0() : fam_(g->t[k]);
    g->S.push_back(side == Side::stable ? P : Mat(I - P));
    g->C.push_back(I - g->S.back());
  }

  // 4-point local quadrature over [t_k, t_{k+1}] from the cubic through the stencil
  static constexpr double wi[4] = {-1 / 24.0, 13 / 24.0, 13 / 24.0, -1 / 24.0};
  static constexpr double w0[4] = {9 / 24.0, 19 / 24.0, -5 / 24.0, 1 / 24.0};
  static constexpr double wN[4] = {1 / 24.0, -5 / 24.0, 19 / 24.0, 9 / 24.0};
  const double dh = g->dir * g->h;
  for (std::size_t k = 0; k < N; ++k) {
    int first;
    const double* w;
    if (k == 0) first = 0, w = w0;
    else if (k == N - 1) first = int(N) - 3, w = wN;
    else first = int(k) - 1, w = wi;
    std::array<int, 4> st;
    std::array<Mat, 4> wf, wb;
    for (int i = 0; i < 4; ++i) {
      const int j = first + i;
      st[i] = j;
      Mat to_next = psi(*g, int(k) + 1, j);
      wf[i] = dh * w[i] * to_next * g->S[j];
      wb[i] = dh * w[i] * g->Mb[k] * to_next * g->C[j];
    }
    g->stencil.push_back(st);
    g->Wf.push_back(std::move(wf));
    g->Wb.push_back(std::move(wb));
  }

  std::lock_guard lock(mu_);
  if (grids_.size() > 512) grids_.clear();
  return grids_.try_emplace(key, std::move(g)).first->second;
}

namespace {

void require_in(const Mat& P, const Vec& v, const char* what) {
  if ((P * v - v).norm() > 1e-8 * (1 + v.norm()))
    throw PreconditionError(std::string(what) + " is not in the required subspace");
}

}  // namespace

ManifoldPoint ManifoldSolver::manifold(Side side, double tau, const Vec& xi) const {
  ManifoldPoint out;
  out.side = side;
  out.tau = tau;
  out.xi = xi;
  require_in(own(side, tau), xi, "xi");
  if (trivial()) {
    out.g = Vec::Zero(xi.size());
    out.info.trivial = true;
    return out;
  }
  gates_.enforce();
  const double T = horizon(tau, side);
  auto g = grid(tau, side, T);
  auto sw = lp_solve(*g, xi, [&](std::size_t k, const Vec& z) { return p_(g->t[k], z); }, s_);
  out.t = g->t;
  out.traj = std::move(sw.z);
  out.info = std::move(sw.info);
  out.info.T_h = T;
  out.info.tail_certified = tail_bound(tau, T, side) <= s_.fp_tol;
  out.g = out.traj[0] - xi;
  return out;
}

// Adaptive while cheap; once a one-unit chunk needs too many steps (a fast-oscillating field
// along an exploding base) fall back to fixed-step RK4 on the grid.  Leaf differences have
// decayed by then, and F stays within delta_f ||p|| whatever the base does.
std::vector<Vec> ManifoldSolver::base_trajectory(const Grid& g, const Vec& x) const {
  const auto& sys = fam_.evaluator().system();
  OdeSettings chunk_opt = flow_.settings();
  chunk_opt.max_steps = 4000;
  NonlinearFlow chunked(sys, p_, chunk_opt);
  std::vector<Vec> b{x};
  b.reserve(g.N + 1);
  const std::size_t chunk = 64;
  std::size_t k = 0;
  while (k < g.N) {
    const std::size_t len = std::min(chunk, g.N - k);
    try {
      auto seg = chunked.through(g.t[k], b[k], std::span<const double>(g.t).subspan(k + 1, len));
      b.insert(b.end(), seg.begin(), seg.end());
      k += len;
    } catch (const IntegrationError&) {
      break;
    }
  }
  auto rhs = [&](double t, const Vec& y) { return Vec(sys.A(t) * y + p_(t, y)); };
  for (; k < g.N; ++k) {
    Vec y = b[k];
    const int sub = 4;
    const double dt = (g.t[k + 1] - g.t[k]) / sub;
    double t = g.t[k];
    for (int i = 0; i < sub; ++i, t += dt) {
      Vec k1 = rhs(t, y), k2 = rhs(t + dt / 2, y + dt / 2 * k1);
      Vec k3 = rhs(t + dt / 2, y + dt / 2 * k2), k4 = rhs(t + dt, y + dt * k3);
      y += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    b.push_back(std::move(y));
  }
  return b;
}

LeafPoint ManifoldSolver::leaf(Side side, double tau, const Vec& zeta, const Vec& x) const {
  LeafPoint out;
  out.side = side;
  out.tau = tau;
  out.zeta = zeta;
  out.x = x;
  const Mat S0 = own(side, tau);
  require_in(S0, zeta, "zeta");
  out.eta_off = zeta - S0 * x;
  if (trivial()) {
    // no own directions: the leaf is the base point; no other directions: h maps into {0}
    const bool none_own = side == Side::stable ? fam_.stable_rank() == 0 : fam_.unstable_rank() == 0;
    out.h = none_own ? Vec(other(side, tau) * x) : Vec(Vec::Zero(x.size()));
    out.info.trivial = true;
    return out;
  }
  gates_.enforce();
  const double T = horizon(tau, side);
  auto g = grid(tau, side, T);
  auto base = base_trajectory(*g, x);
  auto sw = lp_solve(*g, out.eta_off, [&](std::size_t k, const Vec& z) {
    return Vec(p_(g->t[k], z + base[k]) - p_(g->t[k], base[k]));
  }, s_);
  out.t = g->t;
  out.p = std::move(sw.z);
  out.info = std::move(sw.info);
  out.info.T_h = T;
  out.info.tail_certified = tail_bound(tau, T, side) <= s_.fp_tol;
  out.h = other(side, tau) * (out.p[0] + x);

  const double top = side == Side::stable ? -cert_.lambda_s : cert_.lambda_u;
  double rho = s_.rho > 0 ? s_.rho : (top > 1 ? 0.5 * (1 + top) : 0);
  if (rho > 1 && rho < top) {
    double M = 0;
    for (std::size_t k = 0; k < out.t.size(); ++k)
      M = std::max(M, rate_.ratio_pow(out.t[k], tau, g->dir * rho) * out.p[k].norm());
    out.M_rho = M;
  }
  return out;
}

// ---------------------------------------------------------------- diagnostics

double invariance_residual(const ManifoldSolver& m, const ManifoldPoint& pt, double t) {
  Vec y = m.flow()(t, pt.tau, Vec(pt.xi + pt.g));
  Vec g = m.manifold(pt.side, t, Vec(m.own(pt.side, t) * y)).g;
  return (m.other(pt.side, t) * y - g).norm();
}

double invariance_residual(const ManifoldSolver& m, const LeafPoint& pt, double t) {
  Vec y = m.flow()(t, pt.tau, Vec(pt.zeta + pt.h));
  Vec xt = m.flow()(t, pt.tau, pt.x);
  Vec h = m.leaf(pt.side, t, Vec(m.own(pt.side, t) * y), xt).h;
  return (m.other(pt.side, t) * y - h).norm();
}

namespace {

template <class G>
LipschitzReport lipschitz(const ManifoldSolver& m, Side side, double tau, std::size_t pairs,
                          double radius, unsigned long long seed, double slack, G&& graph) {
  LipschitzReport rep;
  rep.budget = m.lip(side);
  const auto& c = m.certificate();
  const double weight =
      std::exp(sgn(tau) * (side == Side::stable ? c.nu : c.omega) * m.rate().log(tau));
  std::mt19937_64 rng(seed);
  Mat P = m.own(side, tau);
  for (std::size_t i = 0; i < pairs; ++i) {
    Vec a = P * sample_ball(rng, m.family().dim(), radius);
    Vec b = P * sample_ball(rng, m.family().dim(), radius);
    if ((a - b).norm() < 1e-6) continue;
    ++rep.pairs;
    rep.empirical = std::max(rep.empirical, (graph(a) - graph(b)).norm() / (weight * (a - b).norm()));
  }
  rep.ok = rep.empirical <= rep.budget * (1 + slack);
  return rep;
}

}  // namespace

LipschitzReport graph_lipschitz(const ManifoldSolver& m, Side side, double tau, std::size_t pairs,
                                double radius, unsigned long long seed, double slack) {
  return lipschitz(m, side, tau, pairs, radius, seed, slack,
                   [&](const Vec& v) { return m.manifold(side, tau, v).g; });
}

LipschitzReport leaf_lipschitz(const ManifoldSolver& m, Side side, double tau, const Vec& x,
                               std::size_t pairs, double radius, unsigned long long seed,
                               double slack) {
  return lipschitz(m, side, tau, pairs, radius, seed, slack,
                   [&](const Vec& v) { return m.leaf(side, tau, v, x).h; });
}

// ---------------------------------------------------------------- straightening

Straightening::Straightening(const ManifoldSolver& m, bool enabled) : m_(m), enabled_(enabled) {}

Vec Straightening::lift_s(double t, const Vec& xs) const {
  return enabled_ ? Vec(xs + m_.g_s(t, xs)) : xs;
}

Vec Straightening::lift_u(double t, const Vec& xu) const {
  return enabled_ ? Vec(xu + m_.g_u(t, xu)) : xu;
}

Vec Straightening::from_straight(double t, const Vec& z) const {
  if (!enabled_) return z;
  Mat P = m_.family()(t);
  Vec zs = P * z, zu = z - zs;
  return z + m_.g_s(t, zs) + m_.g_u(t, zu);
}

Vec Straightening::to_straight(double t, const Vec& x) const {
  if (!enabled_) return x;
  Mat P = m_.family()(t);
  const Mat I = Mat::Identity(P.rows(), P.cols());
  Vec z = x;
  const double tol = 10 * m_.settings().fp_tol * (1 + x.norm());
  for (int it = 0; it < 200; ++it) {
    Vec zn = x - m_.g_s(t, Vec(P * z)) - m_.g_u(t, Vec((I - P) * z));
    double d = (zn - z).norm();
    z = std::move(zn);
    if (d < tol) return z;
  }
  throw ConvergenceError("straightening inverse did not converge");
}

Vec Straightening::field(double t, const Vec& z, double h) const {
  Vec x = from_straight(t, z);
  const auto& fl = m_.flow();
  Vec zp = to_straight(t + h, fl(t + h, t, x));
  Vec zm = to_straight(t - h, fl(t - h, t, x));
  return (zp - zm) / (2 * h) - m_.family().evaluator().system().A(t) * z;
}

Perturbation Straightening::as_perturbation() const {
  const auto& p = m_.perturbation();
  return Perturbation(
      p.dim(), [this](double t, const Vec& z) { return field(t, z); }, p.delta_f(), p.theta(),
      p.is_zero());
}

StraighteningReport check_straightening(const Straightening& st, std::size_t samples,
                                        double t_box, double radius, unsigned long long seed,
                                        double tol) {
  StraighteningReport rep;
  rep.tolerance = tol;
  const auto& fam = st.solver().family();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(-t_box, t_box);
  for (std::size_t i = 0; i < samples; ++i) {
    double t = ut(rng);
    Vec z = sample_ball(rng, fam.dim(), radius);
    Mat P = fam(t);
    Vec zs = P * z, zu = z - zs;
    if (fam.unstable_rank() > 0 && fam.stable_rank() > 0) {
      rep.stable_leak = std::max(rep.stable_leak, (fam.complement(t) * st.field(t, zs)).norm());
      rep.unstable_leak = std::max(rep.unstable_leak, (P * st.field(t, zu)).norm());
    }
    rep.roundtrip =
        std::max(rep.roundtrip, (st.to_straight(t, st.from_straight(t, z)) - z).norm());
    ++rep.samples;
  }
  rep.passed = rep.stable_leak <= tol && rep.unstable_leak <= tol && rep.roundtrip <= tol;
  return rep;
}

}  // namespace mudich
