#pragma once

#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mudich/growth.hpp"
#include "mudich/linflow.hpp"

namespace mudich {

// (C, eps, alpha, beta) of a strict Lyapunov function
struct StrictCertificate {
  double C = 1, eps = 0, alpha = -1, beta = -1;
};

using LyapunovFn = std::function<double(double, const Vec&)>;

// V(t,x) = -Vs(t, pi x) + Vu(t, (id-pi) x) with sup formulas over a horizon
class StrictLyapunov {
 public:
  StrictLyapunov(const ProjectionFamily& fam, const GrowthRate& rate,
                 const DichotomyCertificate& cert, double T_sup = 30);

  double operator()(double t, const Vec& x) const;
  double Vs(double t, const Vec& xs) const;
  double Vu(double t, const Vec& xu) const;
  LyapunovFn fn() const {
    return [this](double t, const Vec& x) { return (*this)(t, x); };
  }

 private:
  const ProjectionFamily& fam_;
  const GrowthRate& rate_;
  DichotomyCertificate cert_;
  double T_sup_;
  double sup_weighted(double t, const Vec& x, double lambda, double dir) const;
};

// per-tau constants of the sup construction; C = max over the window of max(1/Cs, 1/Cu)
struct StrictConstants {
  std::vector<double> tau, Cs, Cu;
  double C = 0;
};
StrictConstants strict_constants(const GrowthRate& rate, const DichotomyCertificate& cert,
                                 std::span<const double> window);

struct QuadSettings {
  double eta = 0.5;
  double T_cut = 0;      // 0: from the tail bound
  double quad_tol = 1e-8;
  double T_max = 80;     // hard cap on the truncation horizon
  OdeSettings ode{};
};

class QuadraticLyapunov {
 public:
  QuadraticLyapunov(const ProjectionFamily& fam, const GrowthRate& rate,
                    const DichotomyCertificate& cert, QuadSettings s = {},
                    std::optional<LocalBound> local = std::nullopt);

  Mat S(double t) const;
  Mat dS(double t, double h = 1e-4) const;  // central difference
  double U(double t, const Vec& x) const;
  double V(double t, const Vec& x) const;
  std::pair<double, double> UV(double t, const Vec& x) const;
  LyapunovFn fn() const {
    return [this](double t, const Vec& x) { return V(t, x); };
  }

  // strictness constants from the local bound; NotApplicable without one
  double C_s(double tau) const;
  double C_u(double tau) const;
  // sup bound |V| <= C mu^{sign eps}||x|| and the lower bound constant, over a window
  StrictCertificate certificate(std::span<const double> window) const;

  double eta() const { return s_.eta; }
  const DichotomyCertificate& dichotomy() const { return cert_; }
  const std::optional<LocalBound>& local() const { return local_; }
  const ProjectionFamily& family() const { return fam_; }
  const GrowthRate& rate() const { return rate_; }
  double horizon(double t) const;
  bool tail_certified(double t) const;
  bool shift_invariant() const { return shift_invariant_; }

 private:
  const ProjectionFamily& fam_;
  const GrowthRate& rate_;
  DichotomyCertificate cert_;
  QuadSettings s_;
  std::optional<LocalBound> local_;
  bool shift_invariant_ = false;
  mutable std::mutex mu_;
  mutable std::map<double, Mat> cache_;
  Mat compute(double t) const;
};

// ------------------------------------------------------------------ reports

struct Tuple {
  double tau = 0, t = 0;
  Vec x;
};

struct StrictnessReport {
  double unstable_growth = std::numeric_limits<double>::infinity();  // growth on the unstable cone
  double stable_decay = std::numeric_limits<double>::infinity();     // decay on the stable cone
  double lower_bound = std::numeric_limits<double>::infinity();      // |V| lower bound
  Tuple unstable_at, stable_at, lower_at;
  std::size_t samples = 0;
  double tolerance = 1e-7;
  bool passed = false;
};

struct StrictnessSettings {
  std::size_t samples = 20;
  unsigned long long seed = 3;
  double tau_box = 5, span = 3, radius = 2;
  double tol = 1e-7;
};

// margins are relative: (rhs - lhs) / max(|rhs|, 1e-300) style, >= -tol passes
StrictnessReport check_strictness(const LyapunovFn& V, const TransitionEvaluator& ev,
                                  const ProjectionFamily& fam, const GrowthRate& rate,
                                  const StrictCertificate& cert, const StrictnessSettings& s = {});

struct MonotonicityReport {
  double min_increment = std::numeric_limits<double>::infinity();  // min V(t_{k+1}) - V(t_k)
  double t_worst = 0;
  double identity_error = 0;  // quadratic case: worst relative error of the dU/dt identity
  bool identity_checked = false;
  bool flat = false;  // V constant along the whole trace
  std::vector<double> t, V, dV;  // trace
  bool passed = false;
};

MonotonicityReport check_monotonicity(const LyapunovFn& V, const TransitionEvaluator& ev,
                                      double tau, const Vec& x, std::span<const double> grid,
                                      const QuadraticLyapunov* quad = nullptr,
                                      double tol = 1e-10);

struct SPropertyReport {
  double symmetry = 0;          // max ||S - S^T||
  double min_abs_eig = std::numeric_limits<double>::infinity();
  double bound_margin = std::numeric_limits<double>::infinity();     // size bound, log-margin
  double printed_margin = std::numeric_limits<double>::infinity();   // derivative inequality as printed
  double derived_margin = std::numeric_limits<double>::infinity();   // derivative inequality as derived
  double stable_lower_margin = std::numeric_limits<double>::infinity();    // lower bound on the stable part
  double unstable_lower_margin = std::numeric_limits<double>::infinity();  // lower bound on the unstable part
  double t_bound = 0, t_printed = 0, t_derived = 0, t_lower = 0;
  bool lower_checked = false;
  bool inertia_ok = true;  // #positive eigenvalues = rank pi, #negative = rank(id - pi)
  double U_monotone = std::numeric_limits<double>::infinity();  // min U(tau) - U(t), t >= tau
  std::size_t samples = 0;
  double tolerance = 1e-7;
  bool printed_holds = false;
  bool passed = false;  // gates on the derived form, never the printed one
};

SPropertyReport check_S_properties(const QuadraticLyapunov& q, const TransitionEvaluator& ev,
                                   std::span<const double> ts, double tol = 1e-7,
                                   unsigned long long seed = 4);

struct RecoveryInput {
  StrictCertificate v;
  double lambda_tilde = 0;
  double Cs = 0, Cu = 0;  // window minima
};

struct RecoveryResult {
  DichotomyCertificate cert;
  double B = 0;
  DichotomyReport cross;
};

RecoveryResult recover_dichotomy(const RecoveryInput& in, const TransitionEvaluator& ev,
                                 const ProjectionFamily& fam, const GrowthRate& rate,
                                 std::span<const double> grid);

// delta_f < eta / (2 D^2): U strictly decreases along perturbed stable solutions
bool monotone_guard(double delta_f, double eta, double D);

}  // namespace mudich
