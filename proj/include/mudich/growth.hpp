#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mudich {

inline double sgn(double v) { return (v > 0) - (v < 0); }

// Uniform grid a, a+step, ..., b (b included up to rounding).
std::vector<double> uniform_grid(double a, double b, double step);

enum class RateKind { exponential, polynomial, chi_derived, custom };

std::string to_string(RateKind k);

class GrowthRate {
 public:
  using Fn = std::function<double(double)>;

  static GrowthRate exponential();
  static GrowthRate polynomial();  // chi(t) = t + 1
  static GrowthRate from_chi(Fn chi, Fn dchi, RateKind kind = RateKind::chi_derived);
  static GrowthRate custom(Fn mu, Fn dmu);

  double operator()(double t) const { return mu_(t); }
  double deriv(double t) const { return dmu_(t); }
  double log(double t) const { return log_mu_(t); }
  // mu'(t)/mu(t)
  double dlog(double t) const { return dlog_(t); }
  // (mu(t)/mu(s))^p computed in log space
  double ratio_pow(double t, double s, double p) const;
  RateKind kind() const { return kind_; }

 private:
  GrowthRate() = default;
  Fn mu_, dmu_, log_mu_, dlog_;
  RateKind kind_ = RateKind::custom;
};

struct RateReport {
  bool positive = true;
  bool monotone = true;
  bool nonnegative_derivative = true;
  bool derivative_consistent = true;
  bool anchored = true;  // mu(0) = 1
  bool endpoints = true;
  double t_big = 0;
  double worst_fd_error = 0;  // scaled by the tolerance, <= 1 passes
  double t_worst = 0;
  std::vector<std::string> violations;
  bool passed() const {
    return positive && monotone && nonnegative_derivative && derivative_consistent && anchored &&
           endpoints;
  }
};

// t_big defaults to 20 for the exponential rate and 1e4 otherwise.
RateReport validate(const GrowthRate& rate, std::span<const double> grid,
                    std::optional<double> t_big = std::nullopt);

}  // namespace mudich
