#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mudich/expr.hpp"
#include "mudich/growth.hpp"
#include "mudich/ode.hpp"

namespace mudich {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

double spectral_norm(const Mat& m);

class LinearSystem {
 public:
  using MatrixFn = std::function<Mat(double)>;

  LinearSystem(std::vector<std::vector<Expr>> a, Mat pi0);
  LinearSystem(MatrixFn a, Mat pi0, bool autonomous);

  static LinearSystem preset(std::string_view name);
  static LinearSystem diag_hyperbolic();   // diag(-1, 1), pi0 = diag(1, 0)
  static LinearSystem bv_scalar_stable();  // a(t) = -1 - 0.1 t sin t

  int dim() const { return static_cast<int>(pi0_.rows()); }
  Mat A(double t) const { return a_(t); }
  const Mat& pi0() const { return pi0_; }
  bool autonomous() const { return autonomous_; }
  // autonomous with A pi0 = pi0 A, so pi(t) = pi0 for all t
  bool invariant_anchor() const { return invariant_anchor_; }

 private:
  MatrixFn a_;
  Mat pi0_;
  bool autonomous_ = false;
  bool invariant_anchor_ = false;
  void finish();
};

class TransitionEvaluator {
 public:
  explicit TransitionEvaluator(const LinearSystem& sys, OdeSettings opt = {},
                               double lattice = 0.25);

  const LinearSystem& system() const { return sys_; }
  const OdeSettings& settings() const { return opt_; }
  int dim() const { return sys_.dim(); }

  // Psi(t, s) by integrating the matrix equation from s to t
  Mat transition(double t, double s) const;
  // Psi(t_j, s) for every t_j; ts need not be sorted
  std::vector<Mat> transitions_from(double s, std::span<const double> ts) const;
  Vec apply(double t, double s, const Vec& x) const;
  // Psi(t, 0) and Psi(0, t) through the lattice cache
  Mat from_anchor(double t) const;
  Mat to_anchor(double t) const;

 private:
  const LinearSystem& sys_;
  OdeSettings opt_;
  double lattice_;
  mutable std::mutex mu_;
  mutable std::map<long, Mat> from_cache_, to_cache_;
  Mat lattice_walk(long k, bool to) const;
};

class ProjectionFamily {
 public:
  explicit ProjectionFamily(const TransitionEvaluator& ev);

  Mat operator()(double t) const;
  Mat complement(double t) const { return Mat::Identity(dim(), dim()) - (*this)(t); }
  int dim() const { return ev_.dim(); }
  int stable_rank() const { return ds_; }
  int unstable_rank() const { return dim() - ds_; }
  const TransitionEvaluator& evaluator() const { return ev_; }
  double lattice() const { return lattice_; }  // pi is cached at multiples of this

 private:
  const TransitionEvaluator& ev_;
  int ds_ = 0;
  double lattice_ = 0.25;
  mutable std::mutex mu_;
  mutable std::map<long, Mat> cache_;
  Mat at_lattice(long k) const;
};

struct DichotomyCertificate {
  double D = 1, lambda_s = -1, lambda_u = 1, nu = 0, omega = 0;
  void validate() const;  // throws PreconditionError
};

struct LocalBound {
  double D_tilde = 1, c = 1, lambda_tilde = 0;
};

struct GrowthCertificate {
  double D = 1, lambda_max = 1, theta = 0;
  std::optional<LocalBound> local;
  void validate() const;
};

// Worst log-margin log(bound) - log(norm) over (t, s) samples.
struct MarginSummary {
  double worst = std::numeric_limits<double>::infinity();
  double t = std::numeric_limits<double>::quiet_NaN();
  double s = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples = 0;
  void add(double margin, double t_, double s_) {
    ++samples;
    if (margin < worst) worst = margin, t = t_, s = s_;
  }
  bool ok(double tol) const { return worst >= -tol; }
};

struct DichotomyReport {
  MarginSummary stable, unstable;
  double tolerance = 1e-7;
  bool passed = false;
  double worst() const { return std::min(stable.worst, unstable.worst); }
};

struct GrowthReport {
  MarginSummary global, local;
  bool local_checked = false;
  double tolerance = 1e-7;
  bool passed = false;
};

DichotomyReport verify_dichotomy(const TransitionEvaluator& ev, const ProjectionFamily& fam,
                                 const GrowthRate& rate, const DichotomyCertificate& cert,
                                 std::span<const double> grid, double tol = 1e-7);

GrowthReport verify_bounded_growth(const TransitionEvaluator& ev, const GrowthRate& rate,
                                   const GrowthCertificate& cert, std::span<const double> grid,
                                   double tol = 1e-7);

struct FittedDichotomy {
  std::optional<double> lambda_s, lambda_u;
  double D = 1, nu = 0, omega = 0;
  double require_lambda_u() const;  // throws NotApplicable on an empty unstable part
  double require_lambda_s() const;
  // inapplicable sides are filled with placeholder rates of the right sign
  DichotomyCertificate certificate() const;
};

FittedDichotomy fit_dichotomy_constants(const TransitionEvaluator& ev,
                                        const ProjectionFamily& fam, const GrowthRate& rate,
                                        std::span<const double> grid);

struct ProjectionResiduals {
  double idempotence = 0;   // max ||pi^2 - pi||
  double commutation = 0;   // max ||pi(t) Psi(t,s) - Psi(t,s) pi(s)|| over neighbours
  double derivative = 0;    // max ||dpi/dt - (A pi - pi A)|| by central difference
  // ||pi(t) Psi(t,0) - Psi(t,0) pi0|| at t = -1, 1; large when pi0 is not the dichotomy
  // projection (its kernel or range is not the bounded-growth subspace)
  double anchor = 0;
};

ProjectionResiduals check_projection(const TransitionEvaluator& ev, const ProjectionFamily& fam,
                                     std::span<const double> grid);

struct CocycleResiduals {
  double cocycle = 0;  // max ||Psi(t,s)Psi(s,r) - Psi(t,r)||
  double inverse = 0;  // max ||Psi(t,s)Psi(s,t) - id||
  std::size_t samples = 0;
};

CocycleResiduals check_cocycle(const TransitionEvaluator& ev, std::size_t samples,
                               unsigned long long seed, double t_min = -5, double t_max = 5);

}  // namespace mudich
