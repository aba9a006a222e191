#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mudich/growth.hpp"
#include "mudich/linflow.hpp"
#include "mudich/nonlinear.hpp"

namespace mudich {

enum class Side { stable, unstable };
std::string to_string(Side s);

struct LPSettings {
  double T_h = 0;         // 0: smallest horizon whose tail bound is below fp_tol
  double T_cap = 40;      // cap for the automatic horizon
  double step = 1.0 / 64;
  double fp_tol = 1e-10;
  int max_iter = 200;
  double M_ref = 10;      // trajectory amplitude assumed by the tail bound
  double rho = 0;         // weighted-norm exponent for leaf diagnostics; 0 picks the midpoint
};

struct Gate {
  std::string name;
  double value = 0;  // lhs - rhs style slack, > 0 passes
  bool applicable = true;
  bool ok = true;
};

// Hypotheses of the linearization theorem as far as manifolds need them.  Not applicable
// when one subspace is trivial: graphs and leaves are then identically zero or the identity.
struct LPGates {
  double delta_tilde = 0;
  std::vector<Gate> checks;
  bool applicable = true;
  bool passed() const;
  const Gate* first_failure() const;
  void enforce() const;  // throws GateError naming the first failed gate
};

LPGates lp_gates(const DichotomyCertificate& cert, const Perturbation& p, int ds, int du);

struct SolveInfo {
  int iterations = 0;
  std::vector<double> deltas;  // sup-norm change per Picard sweep
  double worst_ratio = 0;      // max delta_{k+1}/delta_k after the first sweep
  double T_h = 0;
  bool tail_certified = true;
  std::size_t nodes = 0;
  bool trivial = false;        // one subspace is {0}; nothing was solved
};

struct ManifoldPoint {
  Side side = Side::stable;
  double tau = 0;
  Vec xi, g;                 // g = g_s(tau, xi) or g_u(tau, xi)
  std::vector<double> t;     // oriented grid, t[0] = tau
  std::vector<Vec> traj;     // fixed point x_t(tau, xi)
  SolveInfo info;
};

struct LeafPoint {
  Side side = Side::stable;
  double tau = 0;
  Vec zeta, x, h;            // h = h_s(tau, zeta, x) or h_u(tau, zeta, x)
  Vec eta_off;               // offset parameter: zeta minus the base point's component
  std::vector<double> t;
  std::vector<Vec> p;        // fixed point p_t(tau, eta_off, x)
  std::optional<double> M_rho;  // sup (mu(t)/mu(tau))^rho ||p(t)|| when rho exists
  SolveInfo info;
};

class ManifoldSolver {
 public:
  ManifoldSolver(const ProjectionFamily& fam, const Perturbation& p, const GrowthRate& rate,
                 const DichotomyCertificate& cert, LPSettings s = {}, OdeSettings ode = {});

  const LPGates& gates() const { return gates_; }
  const LPSettings& settings() const { return s_; }
  const ProjectionFamily& family() const { return fam_; }
  const Perturbation& perturbation() const { return p_; }
  const GrowthRate& rate() const { return rate_; }
  const DichotomyCertificate& certificate() const { return cert_; }
  const NonlinearFlow& flow() const { return flow_; }

  double horizon(double tau, Side side) const;
  double tail_bound(double tau, double T, Side side) const;

  ManifoldPoint manifold(Side side, double tau, const Vec& xi) const;
  LeafPoint leaf(Side side, double tau, const Vec& zeta, const Vec& x) const;

  Vec g_s(double tau, const Vec& xi) const { return manifold(Side::stable, tau, xi).g; }
  Vec g_u(double tau, const Vec& xi) const { return manifold(Side::unstable, tau, xi).g; }
  Vec h_s(double tau, const Vec& zeta, const Vec& x) const {
    return leaf(Side::stable, tau, zeta, x).h;
  }
  Vec h_u(double tau, const Vec& zeta, const Vec& x) const {
    return leaf(Side::unstable, tau, zeta, x).h;
  }

  // Lipschitz budgets; the graph and leaf budgets coincide
  double lip(Side side) const;
  // projection onto the side's own subspace at tau and its complement
  Mat own(Side side, double tau) const;
  Mat other(Side side, double tau) const;

  struct Grid;

 private:
  const ProjectionFamily& fam_;
  const Perturbation& p_;
  const GrowthRate& rate_;
  DichotomyCertificate cert_;
  LPSettings s_;
  NonlinearFlow flow_;
  LPGates gates_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<double, int, double>, std::shared_ptr<const Grid>> grids_;
  std::shared_ptr<const Grid> grid(double tau, Side side, double T) const;
  bool trivial() const;
  std::vector<Vec> base_trajectory(const Grid& g, const Vec& x) const;
};

// flow a solved point to t, re-solve there and return the distance to the new graph/leaf
double invariance_residual(const ManifoldSolver& m, const ManifoldPoint& pt, double t);
double invariance_residual(const ManifoldSolver& m, const LeafPoint& pt, double t);

struct LipschitzReport {
  double empirical = 0;  // max ||g(a)-g(b)|| / (mu(tau)^{sign(tau) nu}||a-b||)
  double budget = 0;
  std::size_t pairs = 0;
  bool ok = false;       // empirical <= budget (1 + slack)
};

LipschitzReport graph_lipschitz(const ManifoldSolver& m, Side side, double tau,
                                std::size_t pairs, double radius, unsigned long long seed,
                                double slack = 0.1);
LipschitzReport leaf_lipschitz(const ManifoldSolver& m, Side side, double tau, const Vec& x,
                               std::size_t pairs, double radius, unsigned long long seed,
                               double slack = 0.1);

// Change of variables that flattens both manifolds: x = z + g_s(t, pi z) + g_u(t, (id-pi) z).
// Disabled, it is the identity (negative control).
class Straightening {
 public:
  explicit Straightening(const ManifoldSolver& m, bool enabled = true);

  bool enabled() const { return enabled_; }
  const ManifoldSolver& solver() const { return m_; }
  Vec lift_s(double t, const Vec& xs) const;  // X^s -> stable manifold
  Vec lift_u(double t, const Vec& xu) const;
  Vec from_straight(double t, const Vec& z) const;
  Vec to_straight(double t, const Vec& x) const;  // by fixed point
  // straightened perturbation by central difference of the conjugated flow (checks only)
  Vec field(double t, const Vec& z, double h = 1e-2) const;
  Perturbation as_perturbation() const;

 private:
  const ManifoldSolver& m_;
  bool enabled_;
};

struct StraighteningReport {
  double stable_leak = 0;    // max ||(id - pi) f~(t, pi z)||
  double unstable_leak = 0;  // max ||pi f~(t, (id - pi) z)||
  double roundtrip = 0;      // max ||Xi(Xi^-1 z) - z||
  std::size_t samples = 0;
  double tolerance = 0;
  bool passed = false;
};

StraighteningReport check_straightening(const Straightening& st, std::size_t samples,
                                        double t_box, double radius, unsigned long long seed,
                                        double tol);

}  // namespace mudich
