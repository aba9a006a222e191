#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mudich/expr.hpp"
#include "mudich/growth.hpp"
#include "mudich/linflow.hpp"

namespace mudich {

class Perturbation {
 public:
  using Field = std::function<Vec(double, const Vec&)>;

  Perturbation(std::vector<Expr> f, double delta_f, double theta);
  Perturbation(int n, Field f, double delta_f, double theta, bool zero = false);
  static Perturbation zero(int n, double delta_f = 0.1, double theta = 0);

  Vec operator()(double t, const Vec& x) const { return f_(t, x); }
  int dim() const { return n_; }
  double delta_f() const { return delta_f_; }
  double theta() const { return theta_; }
  bool is_zero() const { return zero_; }
  const std::vector<Expr>& components() const { return exprs_; }  // empty for callables

 private:
  int n_;
  Field f_;
  double delta_f_, theta_;
  bool zero_ = false;
  std::vector<Expr> exprs_;
};

// delta_f mu(t)^(-1 - sign(t) theta) mu'(t)
double phi(const Perturbation& p, const GrowthRate& rate, double t);

struct SamplerSettings {
  std::size_t samples = 2000;
  unsigned long long seed = 1;
  double t_min = -10, t_max = 10;
  double radius = 10;
  double lip_slack = 1e-6;
};

struct AdmissibilityReport {
  double zero_violation = 0;  // max ||f(t, 0)||
  double lipschitz = 0;       // max ratio / phi(t)
  double t_worst = 0;
  Vec x_worst, y_worst;
  std::size_t samples = 0;
  unsigned long long seed = 0;
  bool passed = false;
};

AdmissibilityReport check_admissible(const Perturbation& p, const GrowthRate& rate,
                                     const SamplerSettings& s = {});

// x' = A(t) x + f(t, x) by direct adaptive integration
class NonlinearFlow {
 public:
  NonlinearFlow(const LinearSystem& sys, const Perturbation& p, OdeSettings opt = {});

  Vec operator()(double t, double tau, const Vec& x0) const;
  // states at monotone stops starting from (tau, x0)
  std::vector<Vec> through(double tau, const Vec& x0, std::span<const double> stops) const;

  const LinearSystem& system() const { return sys_; }
  const Perturbation& perturbation() const { return p_; }
  const OdeSettings& settings() const { return opt_; }

 private:
  const LinearSystem& sys_;
  const Perturbation& p_;
  OdeSettings opt_;
};

struct GronwallTuple {
  double t = 0, tau = 0;
  Vec x0, y0;
};

struct GronwallReport {
  double worst_upper = 1e300, worst_lower = 1e300;  // log-margins
  GronwallTuple upper_at, lower_at;
  std::size_t samples = 0;
  double tolerance = 1e-9;
  bool passed = false;
  std::string describe_violation() const;
};

struct GronwallSettings {
  std::size_t tuples = 100;
  unsigned long long seed = 2;
  double tau_box = 5;   // |tau| <= tau_box
  double span = 2;      // |t - tau| <= span
  double radius = 2;    // ||x0||, ||y0|| <= radius
  double tol = 1e-9;
};

std::vector<GronwallTuple> sample_gronwall_tuples(int n, const GronwallSettings& s);

GronwallReport check_gronwall(const NonlinearFlow& flow, const GrowthRate& rate,
                              const GrowthCertificate& cert,
                              std::span<const GronwallTuple> tuples, double tol = 1e-9);

// uniform point in the closed ball of the given radius
template <class Rng>
Vec sample_ball(Rng& rng, int n, double radius);

}  // namespace mudich

#include <random>

namespace mudich {

template <class Rng>
Vec sample_ball(Rng& rng, int n, double radius) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vec v(n);
  do {
    for (int i = 0; i < n; ++i) v(i) = N(rng);
  } while (v.norm() == 0);
  return v * (radius * std::pow(U(rng), 1.0 / n) / v.norm());
}

}  // namespace mudich
