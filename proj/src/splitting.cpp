#include "mudich/splitting.hpp"

#include <cmath>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

SplitMap::SplitMap(const ManifoldSolver& m, SplitSettings s)
    : m_(m), s_(s), lip_sum_(0) {
  const auto& fam = m.family();
  if (fam.stable_rank() > 0 && fam.unstable_rank() > 0 && !m.perturbation().is_zero())
    lip_sum_ = m.lip(Side::stable) + m.lip(Side::unstable);
}

int SplitMap::iteration_bound() const {
  if (lip_sum_ <= 0) return 1;
  if (lip_sum_ >= 1) return s_.max_iter;
  return static_cast<int>(std::ceil(std::log(s_.fp_tol) / std::log(lip_sum_)));
}

// component of S(t, x) on one side: the point of the graph over that side met by the
// opposite leaf of x, written in straight coordinates
Vec SplitMap::graph_point(Side side, double t, const Vec& x) const {
  const Side opp = side == Side::stable ? Side::unstable : Side::stable;
  const Vec zero = Vec::Zero(x.size());
  if (!s_.straighten) {
    // bare leaves: h_opp(t, 0, x) lies in this side's subspace
    return opp == Side::stable ? m_.h_s(t, zero, x) : m_.h_u(t, zero, x);
  }
  Vec w = m_.own(side, t) * x;
  for (int it = 1; it <= s_.max_iter; ++it) {
    Vec base = m_.manifold(side, t, w).g;  // lands in the opposite subspace
    Vec wn = m_.leaf(opp, t, base, x).h;
    double d = (wn - w).norm();
    w = std::move(wn);
    last_iter_ = std::max(last_iter_, it);
    if (d < s_.fp_tol * (1 + x.norm())) return w;
  }
  throw ConvergenceError("splitting map: leaf/graph intersection did not converge");
}

Vec SplitMap::operator()(double t, const Vec& x) const {
  last_iter_ = 0;
  return graph_point(Side::stable, t, x) + graph_point(Side::unstable, t, x);
}

Vec SplitMap::inverse(double t, const Vec& z) const {
  last_iter_ = 0;
  Mat P = m_.family()(t);
  Vec zs = P * z, zu = z - zs;
  // a lies on the unstable manifold, b on the stable one
  Vec a = zu, b = zs;
  if (s_.straighten) {
    a += m_.g_u(t, zu);
    b += m_.g_s(t, zs);
  }
  Vec ws = zs, wu = zu;
  for (int it = 1; it <= s_.max_iter; ++it) {
    Vec nu = m_.h_s(t, ws, a);
    Vec ns = m_.h_u(t, nu, b);
    double d = (nu - wu).norm() + (ns - ws).norm();
    wu = std::move(nu);
    ws = std::move(ns);
    last_iter_ = it;
    if (d < s_.fp_tol * (1 + z.norm())) return ws + wu;
  }
  throw ConvergenceError("inverse splitting map did not converge");
}

// ---------------------------------------------------------------- decoupled flows

DecoupledFlows::DecoupledFlows(const ManifoldSolver& m, bool straightened)
    : fam_(m.family()), m_(&m), straightened_(straightened) {}

DecoupledFlows::DecoupledFlows(const ProjectionFamily& fam, const Perturbation& straight,
                               OdeSettings ode)
    : fam_(fam), direct_(true) {
  const int n = fam.dim();
  ps_.emplace(n, [&fam, &straight](double t, const Vec& x) { return Vec(fam(t) * straight(t, x)); },
              straight.delta_f(), straight.theta(), straight.is_zero());
  pu_.emplace(n, [&fam, &straight](double t, const Vec& x) {
    return Vec(fam.complement(t) * straight(t, x));
  }, straight.delta_f(), straight.theta(), straight.is_zero());
  const auto& sys = fam.evaluator().system();
  fs_.emplace(sys, *ps_, ode);
  fu_.emplace(sys, *pu_, ode);
}

Mat DecoupledFlows::proj(Side side, double t) const {
  return side == Side::stable ? fam_(t) : fam_.complement(t);
}

namespace {

void require_side(const Mat& P, const Vec& x0) {
  if ((P * x0 - x0).norm() > 1e-8 * (1 + x0.norm()))
    throw PreconditionError("initial state is off the decoupled subspace");
}

}  // namespace

Vec DecoupledFlows::operator()(Side side, double t, double tau, const Vec& x0) const {
  require_side(proj(side, tau), x0);
  if (direct_) return (side == Side::stable ? *fs_ : *fu_)(t, tau, x0);
  Vec y = x0;
  if (straightened_) y += m_->manifold(side, tau, x0).g;
  return proj(side, t) * m_->flow()(t, tau, y);
}

std::vector<Vec> DecoupledFlows::through(Side side, double tau, const Vec& x0,
                                         std::span<const double> stops) const {
  require_side(proj(side, tau), x0);
  if (direct_) return (side == Side::stable ? *fs_ : *fu_).through(tau, x0, stops);
  Vec y = x0;
  if (straightened_) y += m_->manifold(side, tau, x0).g;
  auto out = m_->flow().through(tau, y, stops);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = proj(side, stops[i]) * out[i];
  return out;
}

std::function<Vec(double)> DecoupledFlows::trajectory(Side side, double tau,
                                                     const Vec& x0) const {
  require_side(proj(side, tau), x0);
  if (direct_)
    return [this, side, tau, x0](double t) { return (side == Side::stable ? *fs_ : *fu_)(t, tau, x0); };
  Vec y = x0;
  if (straightened_) y += m_->manifold(side, tau, x0).g;
  return [this, side, tau, y](double t) { return Vec(proj(side, t) * m_->flow()(t, tau, y)); };
}

double DecoupledFlows::subspace_residual(Side side, double tau, const Vec& x0,
                                         std::span<const double> stops) const {
  require_side(proj(side, tau), x0);
  const Side opp = side == Side::stable ? Side::unstable : Side::stable;
  double worst = 0;
  if (direct_) {
    auto xs = (side == Side::stable ? *fs_ : *fu_).through(tau, x0, stops);
    for (std::size_t i = 0; i < xs.size(); ++i)
      worst = std::max(worst, (proj(opp, stops[i]) * xs[i]).norm());
    return worst;
  }
  // lifted: the full trajectory must stay on the graph over this side
  Vec y = x0 + (straightened_ ? Vec(m_->manifold(side, tau, x0).g) : Vec::Zero(x0.size()));
  auto ys = m_->flow().through(tau, y, stops);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    Vec w = proj(side, stops[i]) * ys[i];
    Vec g = straightened_ ? m_->manifold(side, stops[i], w).g : Vec::Zero(w.size());
    worst = std::max(worst, (ys[i] - w - g).norm());
  }
  return worst;
}

// ---------------------------------------------------------------- checks

std::vector<SplitSample> sample_split(int n, std::size_t count, double tau_box, double span,
                                      double radius, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(-tau_box, tau_box), us(-span, span);
  std::vector<SplitSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    SplitSample s;
    s.tau = ut(rng);
    s.t = s.tau + us(rng);
    s.x = sample_ball(rng, n, radius);
    out.push_back(std::move(s));
  }
  return out;
}

RoundTripReport check_split_roundtrip(const SplitMap& sm, std::span<const SplitSample> samples,
                                      double tol) {
  RoundTripReport rep;
  rep.tolerance = tol;
  for (auto& s : samples) {
    rep.forward_inverse = std::max(rep.forward_inverse, (sm(s.tau, sm.inverse(s.tau, s.x)) - s.x).norm());
    rep.inverse_forward = std::max(rep.inverse_forward, (sm.inverse(s.tau, sm(s.tau, s.x)) - s.x).norm());
    ++rep.samples;
  }
  if (!samples.empty()) {
    const Vec zero = Vec::Zero(samples.front().x.size());
    rep.zero = sm(samples.front().tau, zero).norm();
  }
  rep.passed = rep.forward_inverse < tol && rep.inverse_forward < tol && rep.zero < tol;
  return rep;
}

SplitConjugationReport verify_split_conjugation(const SplitMap& sm, const DecoupledFlows& df,
                                                const NonlinearFlow& full,
                                                std::span<const SplitSample> samples,
                                                double tol) {
  SplitConjugationReport rep;
  rep.tolerance = tol;
  const auto& fam = df.family();
  for (auto& s : samples) {
    ConjugationRow row{s.tau, s.t, 0, 0};
    Mat P = fam(s.tau);
    {
      Vec z = sm(s.tau, s.x);
      Vec zs = P * z, zu = z - zs;
      Vec lhs = sm(s.t, full(s.t, s.tau, s.x));
      Vec rhs = df(Side::stable, s.t, s.tau, zs) + df(Side::unstable, s.t, s.tau, zu);
      row.forward = (lhs - rhs).norm();
    }
    {
      Vec zs = P * s.x, zu = s.x - zs;
      Vec lhs = sm.inverse(s.t, Vec(df(Side::stable, s.t, s.tau, zs) + df(Side::unstable, s.t, s.tau, zu)));
      Vec rhs = full(s.t, s.tau, sm.inverse(s.tau, s.x));
      row.inverse = (lhs - rhs).norm();
    }
    rep.forward = std::max(rep.forward, row.forward);
    rep.inverse = std::max(rep.inverse, row.inverse);
    rep.rows.push_back(row);
  }
  rep.passed = rep.forward < tol && rep.inverse < tol;
  return rep;
}

}  // namespace mudich
