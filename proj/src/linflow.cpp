#include "mudich/linflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mudich/errors.hpp"

namespace mudich {

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------- system

LinearSystem::LinearSystem(std::vector<std::vector<Expr>> a, Mat pi0) : pi0_(std::move(pi0)) {
  const auto n = static_cast<std::size_t>(pi0_.rows());
  if (a.size() != n) throw ConfigError("A must have as many rows as pi0");
  bool depends = false;
  for (auto& row : a) {
    if (row.size() != n) throw ConfigError("A must be square and match pi0");
    for (auto& e : row) {
      if (e.depends_on_x()) throw ConfigError("entries of A may only depend on t: " + e.print());
      depends = depends || e.depends_on_t();
    }
  }
  autonomous_ = !depends;
  a_ = [a = std::move(a), n](double t) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = a[i][j].eval(t);
    return m;
  };
  finish();
}

LinearSystem::LinearSystem(MatrixFn a, Mat pi0, bool autonomous)
    : a_(std::move(a)), pi0_(std::move(pi0)), autonomous_(autonomous) {
  finish();
}

void LinearSystem::finish() {
  const auto n = pi0_.rows();
  if (n < 1 || n > 8 || pi0_.cols() != n) throw ConfigError("dimension must be 1..8 and pi0 square");
  if ((pi0_ * pi0_ - pi0_).norm() > 1e-10) throw ConfigError("pi0 is not idempotent");
  Mat a0 = a_(0.0);
  if (a0.rows() != n || a0.cols() != n) throw ConfigError("A(t) has the wrong shape");
  if (!a0.allFinite()) throw ConfigError("A(0) is not finite");
  invariant_anchor_ =
      autonomous_ && (a0 * pi0_ - pi0_ * a0).norm() <= 1e-14 * (1 + a0.norm());
}

LinearSystem LinearSystem::diag_hyperbolic() {
  std::vector<std::vector<Expr>> a{{Expr::parse("-1"), Expr::parse("0")},
                                   {Expr::parse("0"), Expr::parse("1")}};
  Mat pi0 = Mat::Zero(2, 2);
  pi0(0, 0) = 1;
  return LinearSystem(std::move(a), pi0);
}

LinearSystem LinearSystem::bv_scalar_stable() {
  std::vector<std::vector<Expr>> a{{Expr::parse("-1 - 0.1*t*sin(t)")}};
  return LinearSystem(std::move(a), Mat::Identity(1, 1));
}

LinearSystem LinearSystem::preset(std::string_view name) {
  if (name == "diag_hyperbolic") return diag_hyperbolic();
  if (name == "bv_scalar_stable") return bv_scalar_stable();
  throw ConfigError("unknown linear preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- transitions

TransitionEvaluator::TransitionEvaluator(const LinearSystem& sys, OdeSettings opt, double lattice)
    : sys_(sys), opt_(opt), lattice_(lattice) {}

Mat TransitionEvaluator::transition(double t, double s) const {
  const int n = dim();
  if (t == s) return Mat::Identity(n, n);
  auto rhs = [this](double tt, const Mat& y) -> Mat { return sys_.A(tt) * y; };
  return integrate<Mat>(rhs, s, t, Mat::Identity(n, n), opt_);
}

std::vector<Mat> TransitionEvaluator::transitions_from(double s, std::span<const double> ts) const {
  const int n = dim();
  std::vector<Mat> out(ts.size(), Mat::Identity(n, n));
  std::vector<std::size_t> fwd, bwd;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] > s) fwd.push_back(i);
    else if (ts[i] < s) bwd.push_back(i);
  }
  auto rhs = [this](double tt, const Mat& y) -> Mat { return sys_.A(tt) * y; };
  auto run = [&](std::vector<std::size_t>& idx, bool ascending) {
    if (idx.empty()) return;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return ascending ? ts[a] < ts[b] : ts[a] > ts[b];
    });
    std::vector<double> stops;
    for (auto i : idx) stops.push_back(ts[i]);
    auto ys = integrate_through<Mat>(rhs, s, Mat::Identity(n, n), stops, opt_);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = std::move(ys[k]);
  };
  run(fwd, true);
  run(bwd, false);
  return out;
}

Vec TransitionEvaluator::apply(double t, double s, const Vec& x) const {
  if (t == s) return x;
  auto rhs = [this](double tt, const Vec& y) -> Vec { return sys_.A(tt) * y; };
  return integrate<Vec>(rhs, s, t, x, opt_);
}

Mat TransitionEvaluator::lattice_walk(long k, bool to) const {
  auto& cache = to ? to_cache_ : from_cache_;
  std::lock_guard lock(mu_);
  if (auto it = cache.find(k); it != cache.end()) return it->second;
  const int n = dim();
  if (k == 0) return cache[0] = Mat::Identity(n, n);
  const long step = k > 0 ? 1 : -1;
  // resume from the farthest cached node on the way to k
  long j0 = 0;
  while (cache.count(j0 + step) && j0 != k) j0 += step;
  Mat y0 = j0 == 0 ? Mat::Identity(n, n) : cache.at(j0);
  std::vector<double> stops;
  for (long j = j0 + step; j != k + step; j += step) stops.push_back(j * lattice_);
  std::vector<Mat> ys;
  if (to) {
    // Z(t) = Psi(0, t) solves Z' = -Z A(t)
    auto rhs = [this](double tt, const Mat& z) -> Mat { return -(z * sys_.A(tt)); };
    ys = integrate_through<Mat>(rhs, j0 * lattice_, y0, stops, opt_);
  } else {
    auto rhs = [this](double tt, const Mat& y) -> Mat { return sys_.A(tt) * y; };
    ys = integrate_through<Mat>(rhs, j0 * lattice_, y0, stops, opt_);
  }
  for (long j = j0 + step, i = 0; j != k + step; j += step, ++i) cache.try_emplace(j, ys[i]);
  return cache.at(k);
}

Mat TransitionEvaluator::from_anchor(double t) const {
  long k = std::lround(t / lattice_);
  double L = k * lattice_;
  Mat base = lattice_walk(k, false);
  return t == L ? base : Mat(transition(t, L) * base);
}

Mat TransitionEvaluator::to_anchor(double t) const {
  long k = std::lround(t / lattice_);
  double L = k * lattice_;
  Mat base = lattice_walk(k, true);
  return t == L ? base : Mat(base * transition(L, t));
}

// ---------------------------------------------------------------- projections

ProjectionFamily::ProjectionFamily(const TransitionEvaluator& ev) : ev_(ev) {
  ds_ = static_cast<int>(std::lround(ev.system().pi0().trace()));
}

namespace {

Mat orth(const Mat& b) {
  Eigen::HouseholderQR<Mat> qr(b);
  return Mat(qr.householderQ() * Mat::Identity(b.rows(), b.cols()));
}

// orthonormal basis of the orthogonal complement of range(b)
Mat orth_complement(const Mat& b) {
  Eigen::HouseholderQR<Mat> qr(b);
  Mat q = qr.householderQ();
  return q.rightCols(b.rows() - b.cols());
}

Mat basis_of(const Mat& p) {
  Eigen::JacobiSVD<Mat> svd(p, Eigen::ComputeThinU);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) r += svd.singularValues()(i) > 0.5;
  return svd.matrixU().leftCols(r);
}

}  // namespace

// Each subspace is carried in the direction where it attracts: the unstable one forward
// from the anchor and the stable one backward from a far node (and mirrored for L < 0).
// Carrying the stable subspace forward would amplify rounding by Psi's dichotomy gap.
Mat ProjectionFamily::at_lattice(long k) const {
  const Mat& p0 = ev_.system().pi0();
  const int n = dim();
  if (k == 0 || ds_ == 0 || ds_ == n) return p0;
  const double L = k * lattice_;
  const bool fwd = k > 0;
  const Mat I = Mat::Identity(n, n);
  // near: the subspace that is stable to carry from the anchor
  Mat near0 = basis_of(fwd ? Mat(I - p0) : p0);
  Mat near = orth(ev_.from_anchor(L) * near0);
  auto rhs = [this](double tt, const Mat& y) -> Mat { return ev_.system().A(tt) * y; };
  Mat prev;
  for (double T = 8; T <= 128; T *= 2) {
    const double far = fwd ? L + T : L - T;
    Mat seed = orth_complement(orth(ev_.from_anchor(far) * near0));
    Mat other = orth(integrate<Mat>(rhs, far, L, seed, ev_.settings()));
    Mat M(n, n);
    if (fwd) M << other, near;
    else M << near, other;
    Mat D = Mat::Zero(n, n);
    D.topLeftCorner(ds_, ds_).setIdentity();
    Mat p = M * D * M.inverse();
    if (prev.size() && (p - prev).norm() <= 1e-11 * (1 + p.norm())) return p;
    prev = std::move(p);
  }
  return prev;
}

Mat ProjectionFamily::operator()(double t) const {
  const Mat& p0 = ev_.system().pi0();
  if (t == 0 || ev_.system().invariant_anchor()) return p0;
  long k = std::lround(t / lattice_);
  double L = k * lattice_;
  Mat pl;
  {
    std::unique_lock lock(mu_);
    auto it = cache_.find(k);
    if (it != cache_.end()) {
      pl = it->second;
    } else {
      lock.unlock();
      pl = at_lattice(k);
      lock.lock();
      cache_.try_emplace(k, pl);
    }
  }
  if (t == L) return pl;
  Mat m = ev_.transition(t, L);
  return m * pl * m.inverse();
}

// ---------------------------------------------------------------- certificates

void DichotomyCertificate::validate() const {
  auto bad = [](const std::string& m) { throw PreconditionError("dichotomy certificate: " + m); };
  if (!(std::isfinite(D) && std::isfinite(lambda_s) && std::isfinite(lambda_u) &&
        std::isfinite(nu) && std::isfinite(omega)))
    bad("constants must be finite");
  if (!(D >= 1)) bad("D >= 1 required");
  if (!(lambda_s < 0)) bad("lambda_s < 0 required");
  if (!(lambda_u > 0)) bad("lambda_u > 0 required");
  if (!(nu >= 0)) bad("nu >= 0 required");
  if (!(omega >= 0)) bad("omega >= 0 required");
  if (!(lambda_s + nu < 0)) bad("lambda_s + nu < 0 required");
  if (!(lambda_u - omega > 0)) bad("lambda_u - omega > 0 required");
}

void GrowthCertificate::validate() const {
  auto bad = [](const std::string& m) { throw PreconditionError("growth certificate: " + m); };
  if (!(std::isfinite(D) && std::isfinite(lambda_max) && std::isfinite(theta)))
    bad("constants must be finite");
  if (!(D >= 1)) bad("D >= 1 required");
  if (!(lambda_max > 0)) bad("lambda_max > 0 required");
  if (!(theta >= 0)) bad("theta >= 0 required");
  if (local) {
    if (!(local->D_tilde >= 1)) bad("D_tilde >= 1 required");
    if (!(local->c > 0)) bad("c > 0 required");
    if (!(local->lambda_tilde >= 0)) bad("lambda_tilde >= 0 required");
  }
}

namespace {

double log_norm(const Mat& m) {
  double v = spectral_norm(m);
  return v > 0 ? std::log(v) : -std::numeric_limits<double>::infinity();
}

void check_sorted(std::span<const double> grid) {
  if (grid.empty()) throw PreconditionError("grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw PreconditionError("grid must be strictly increasing");
}

}  // namespace

DichotomyReport verify_dichotomy(const TransitionEvaluator& ev, const ProjectionFamily& fam,
                                 const GrowthRate& rate, const DichotomyCertificate& cert,
                                 std::span<const double> grid, double tol) {
  cert.validate();
  check_sorted(grid);
  DichotomyReport rep;
  rep.tolerance = tol;
  const double logD = std::log(cert.D);
  for (double s : grid) {
    auto psi = ev.transitions_from(s, grid);
    Mat P = fam(s);
    Mat Q = Mat::Identity(P.rows(), P.cols()) - P;
    double ls = rate.log(s);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double t = grid[j];
      double dl = rate.log(t) - ls;
      if (t >= s && fam.stable_rank() > 0) {
        double bound = logD + cert.lambda_s * dl + sgn(s) * cert.nu * ls;
        rep.stable.add(bound - log_norm(psi[j] * P), t, s);
      }
      if (t <= s && fam.unstable_rank() > 0) {
        double bound = logD + cert.lambda_u * dl + sgn(s) * cert.omega * ls;
        rep.unstable.add(bound - log_norm(psi[j] * Q), t, s);
      }
    }
  }
  rep.passed = rep.stable.ok(tol) && rep.unstable.ok(tol);
  return rep;
}

GrowthReport verify_bounded_growth(const TransitionEvaluator& ev, const GrowthRate& rate,
                                   const GrowthCertificate& cert, std::span<const double> grid,
                                   double tol) {
  cert.validate();
  check_sorted(grid);
  GrowthReport rep;
  rep.tolerance = tol;
  rep.local_checked = cert.local.has_value();
  const double logD = std::log(cert.D);
  for (double s : grid) {
    auto psi = ev.transitions_from(s, grid);
    double ls = rate.log(s);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double t = grid[j];
      double ln = log_norm(psi[j]);
      double bound = logD + sgn(t - s) * cert.lambda_max * (rate.log(t) - ls) +
                     sgn(s) * cert.theta * ls;
      rep.global.add(bound - ln, t, s);
      if (cert.local && std::abs(t - s) <= cert.local->c * (1 + 1e-12)) {
        double lb = std::log(cert.local->D_tilde) +
                    cert.local->lambda_tilde * rate.log(std::abs(t));
        rep.local.add(lb - ln, t, s);
      }
    }
  }
  rep.passed = rep.global.ok(tol) && (!rep.local_checked || rep.local.ok(tol));
  return rep;
}

// ---------------------------------------------------------------- fitting

double FittedDichotomy::require_lambda_u() const {
  if (!lambda_u) throw NotApplicable("lambda_u: the unstable subspace is empty");
  return *lambda_u;
}

double FittedDichotomy::require_lambda_s() const {
  if (!lambda_s) throw NotApplicable("lambda_s: the stable subspace is empty");
  return *lambda_s;
}

DichotomyCertificate FittedDichotomy::certificate() const {
  DichotomyCertificate c;
  c.D = D;
  c.nu = nu;
  c.omega = omega;
  c.lambda_s = lambda_s.value_or(-1.0);
  c.lambda_u = lambda_u.value_or(1.0);
  return c;
}

namespace {

struct Sample {
  double x, y, a;  // abscissa, log norm, |log mu(s)|
  bool anchor;     // s = 0
};

// slope by least squares, then the smallest (D, nu) covering all residuals
void fit_side(const std::vector<Sample>& pts, std::optional<double>& rate_out, double& D,
              double& expo) {
  double mx = 0, my = 0;
  for (auto& p : pts) mx += p.x, my += p.y;
  mx /= pts.size();
  my /= pts.size();
  double sxx = 0, sxy = 0;
  for (auto& p : pts) sxx += (p.x - mx) * (p.x - mx), sxy += (p.x - mx) * (p.y - my);
  if (!(sxx > 1e-14 * pts.size())) throw ConvergenceError("degenerate regression: one abscissa");
  double slope = sxy / sxx;
  double logD = 0;
  for (auto& p : pts)
    if (p.a < 1e-12) logD = std::max(logD, p.y - slope * p.x);
  double head = logD + std::log(1.05);
  double e = 0;
  for (auto& p : pts)
    if (p.a >= 1e-12) e = std::max(e, (p.y - slope * p.x - head) / p.a);
  rate_out = slope;
  D = std::max(D, std::exp(head));
  expo = e;
}

}  // namespace

FittedDichotomy fit_dichotomy_constants(const TransitionEvaluator& ev,
                                        const ProjectionFamily& fam, const GrowthRate& rate,
                                        std::span<const double> grid) {
  check_sorted(grid);
  std::vector<Sample> st, un;
  for (double s : grid) {
    auto psi = ev.transitions_from(s, grid);
    Mat P = fam(s);
    Mat Q = Mat::Identity(P.rows(), P.cols()) - P;
    double ls = rate.log(s);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double t = grid[j];
      double x = rate.log(t) - ls;
      if (t > s && fam.stable_rank() > 0) st.push_back({x, log_norm(psi[j] * P), std::abs(ls), s == 0});
      if (t < s && fam.unstable_rank() > 0) un.push_back({x, log_norm(psi[j] * Q), std::abs(ls), s == 0});
    }
  }
  FittedDichotomy f;
  if (fam.stable_rank() > 0) {
    if (st.empty()) throw ConvergenceError("degenerate regression: no stable samples");
    fit_side(st, f.lambda_s, f.D, f.nu);
  }
  if (fam.unstable_rank() > 0) {
    if (un.empty()) throw ConvergenceError("degenerate regression: no unstable samples");
    fit_side(un, f.lambda_u, f.D, f.omega);
  }
  return f;
}

// ---------------------------------------------------------------- residual checks

ProjectionResiduals check_projection(const TransitionEvaluator& ev, const ProjectionFamily& fam,
                                     std::span<const double> grid) {
  ProjectionResiduals r;
  const double h = 1e-4;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double t = grid[i];
    Mat P = fam(t);
    r.idempotence = std::max(r.idempotence, spectral_norm(P * P - P));
    Mat dP = (fam(t + h) - fam(t - h)) / (2 * h);
    Mat A = ev.system().A(t);
    r.derivative = std::max(r.derivative, spectral_norm(dP - (A * P - P * A)));
    if (i + 1 < grid.size()) {
      double t1 = grid[i + 1];
      Mat M = ev.transition(t1, t);
      r.commutation = std::max(r.commutation, spectral_norm(fam(t1) * M - M * P));
    }
  }
  const Mat& p0 = ev.system().pi0();
  for (double t : {-1.0, 1.0}) {
    Mat M = ev.transition(t, 0);
    r.anchor = std::max(r.anchor, spectral_norm(fam(t) * M - M * p0));
  }
  return r;
}

CocycleResiduals check_cocycle(const TransitionEvaluator& ev, std::size_t samples,
                               unsigned long long seed, double t_min, double t_max) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(t_min, t_max);
  CocycleResiduals r;
  const int n = ev.dim();
  for (std::size_t i = 0; i < samples; ++i) {
    double t = U(rng), s = U(rng), q = U(rng);
    Mat ts = ev.transition(t, s);
    Mat tq = ev.transition(t, q);
    Mat sq = ev.transition(s, q);
    Mat st = ev.transition(s, t);
    double scale = std::max(1.0, spectral_norm(ts) * spectral_norm(sq));
    r.cocycle = std::max(r.cocycle, spectral_norm(ts * sq - tq) / scale);
    scale = std::max(1.0, spectral_norm(ts) * spectral_norm(st));
    r.inverse = std::max(r.inverse, spectral_norm(ts * st - Mat::Identity(n, n)) / scale);
    ++r.samples;
  }
  return r;
}

}  // namespace mudich
