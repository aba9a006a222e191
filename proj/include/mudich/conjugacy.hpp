#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mudich/lyapunov.hpp"
#include "mudich/splitting.hpp"

namespace mudich {

struct CrossingSettings {
  double root_tol = 1e-10;     // in V-value
  double max_radius = 1 << 20;  // bracket half-width cap
  double zero_tol = 1e-12;     // ||x0|| below this maps to 0
};

using Trajectory = std::function<Vec(double)>;

// Level-crossing times of the quadratic V along a trajectory.  Stable side: the time where
// V = -1; unstable side: V = +1 (the time-reversed stable problem).  V increases in both cases.
class CrossingSolver {
 public:
  explicit CrossingSolver(const QuadraticLyapunov& q, CrossingSettings s = {});

  double level(double t, const Vec& x) const { return q_.V(t, x); }
  double solve(Side side, double tau, const Trajectory& x) const;

  // finite-difference increments of V(t, x(t)) on the grid; min over interior points
  struct Trace {
    std::vector<double> t, U, V, dV;
    double min_increment = 0;
  };
  Trace trace(const Trajectory& x, std::span<const double> grid) const;

  const QuadraticLyapunov& lyapunov() const { return q_; }
  const CrossingSettings& settings() const { return s_; }

 private:
  const QuadraticLyapunov& q_;
  CrossingSettings s_;
};

// delta_f < eta / (2 D^2): V stays monotone along perturbed trajectories
struct ConjugacyGate {
  double delta_f = 0, bound = 0;
  bool ok = false;
};

class ConjugacyMap {
 public:
  ConjugacyMap(const SplitMap& sm, const DecoupledFlows& df, const QuadraticLyapunov& q,
               CrossingSettings s = {});

  const ConjugacyGate& gate() const { return gate_; }
  void enforce() const;  // throws GateError when the monotone guard fails

  // decoupled nonlinear and linear trajectories through (tau, x0) on one side
  Trajectory nonlinear(Side side, double tau, const Vec& x0) const;
  Trajectory linear(Side side, double tau, const Vec& x0) const;

  double ell(Side side, double tau, const Vec& x0) const;    // nonlinear crossing
  double kappa(Side side, double tau, const Vec& x0) const;  // linear crossing
  Vec F(Side side, double tau, const Vec& x0) const;
  Vec L(Side side, double tau, const Vec& x0) const;

  Vec F(double tau, const Vec& x) const;      // both sides on the split coordinates
  Vec F_inv(double tau, const Vec& y) const;
  Vec G(double tau, const Vec& x) const;      // F o S
  Vec G_inv(double tau, const Vec& y) const;  // S^ o F^-1

  const CrossingSolver& crossing() const { return cs_; }
  const SplitMap& split() const { return sm_; }
  const DecoupledFlows& flows() const { return df_; }
  const ProjectionFamily& family() const { return df_.family(); }

 private:
  const SplitMap& sm_;
  const DecoupledFlows& df_;
  CrossingSolver cs_;
  ConjugacyGate gate_;
  bool zero(const Vec& x) const { return x.norm() < cs_.settings().zero_tol; }
  Mat own(Side side, double t) const;
};

struct ConjSample {
  double tau = 0, t = 0;
  Vec x;
};

// x restricted to the side's subspace at tau when side is given
std::vector<ConjSample> sample_conj(const ProjectionFamily& fam, std::optional<Side> side,
                                    std::size_t count, double tau_box, double span,
                                    double radius, unsigned long long seed);

struct CrossingRow {
  double tau = 0, t = 0, ell = 0, kappa = 0, defect = 0, transport = 0, min_dW = 0;
};

struct EquivarianceReport {
  double F_defect = 0, L_defect = 0;
  double ell_transport = 0, kappa_transport = 0;
  double min_dW = 0;  // smallest V increment along the solved trajectories
  std::vector<CrossingRow> rows;
  double tolerance = 0, transport_tolerance = 0;
  bool passed = false;
};

EquivarianceReport verify_equivariance(const ConjugacyMap& cm, Side side,
                                       std::span<const ConjSample> samples, double tol = 1e-5,
                                       double transport_tol = 1e-7);

struct InverseReport {
  double FL = 0, LF = 0;       // ||F(L x0) - x0||, ||L(F x0) - x0||
  double crossing = 0;         // |kappa(x0) - ell(L x0)| and |ell(x0) - kappa(F x0)|
  double zero = 0;
  std::vector<CrossingRow> rows;
  double tolerance = 0;
  bool passed = false;
};

InverseReport verify_inverse(const ConjugacyMap& cm, Side side,
                             std::span<const ConjSample> samples, double tol = 1e-6);

struct EnvelopeReport {
  double B = 0;            // sup of mu(ell)^{sign(ell) eps} over the samples
  double worst_ratio = 0;  // max ||F x0|| / envelope (and the same for L)
  std::size_t samples = 0;
  bool passed = false;
};

// ||F_s(tau, x0)|| <= C mu(tau)^{sign eps} (B C D mu(tau)^{sign theta} ||x0||)^{-beta/(lmax + delta_f D)}
EnvelopeReport check_envelope(const ConjugacyMap& cm, const StrictCertificate& v,
                              const DichotomyCertificate& dich, const GrowthCertificate& growth,
                              double theta, double delta_f, std::span<const ConjSample> samples);

struct ConjugacyRow {
  double tau = 0, t = 0, defect = 0;
};

struct EndToEndReport {
  double defect = 0;  // max ||G(t, x(t,tau,x)) - Psi(t,tau) G(tau,x)||
  double zero = 0;
  std::vector<ConjugacyRow> rows;
  double tolerance = 0;
  bool passed = false;
};

EndToEndReport verify_conjugacy(const ConjugacyMap& cm, const NonlinearFlow& full,
                                std::span<const ConjSample> samples, double tol = 1e-4);

struct HomeomorphismReport {
  std::size_t mesh = 0;
  double min_separation = 0;  // smallest distance between images of distinct mesh points
  double roundtrip = 0;       // max ||G^-1(G x) - x||
  bool passed = false;
};

HomeomorphismReport check_homeomorphism(const ConjugacyMap& cm, double tau, double radius,
                                        int per_axis, double tol = 1e-6);

}  // namespace mudich
