#pragma once

// Dormand-Prince 5(4) with step control.  State is any dense Eigen type;
// output is produced by landing exactly on each requested stop.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mudich/errors.hpp"

namespace mudich {

struct OdeSettings {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = 0.5;
  double min_step = 1e-12;  // relative to max(1, |t|)
  long max_steps = 5'000'000;
};

namespace detail {

template <class S>
struct Dopri {
  static constexpr S c2 = S(1) / 5, c3 = S(3) / 10, c4 = S(4) / 5, c5 = S(8) / 9;
  static constexpr S a21 = S(1) / 5;
  static constexpr S a31 = S(3) / 40, a32 = S(9) / 40;
  static constexpr S a41 = S(44) / 45, a42 = S(-56) / 15, a43 = S(32) / 9;
  static constexpr S a51 = S(19372) / 6561, a52 = S(-25360) / 2187, a53 = S(64448) / 6561,
                     a54 = S(-212) / 729;
  static constexpr S a61 = S(9017) / 3168, a62 = S(-355) / 33, a63 = S(46732) / 5247,
                     a64 = S(49) / 176, a65 = S(-5103) / 18656;
  static constexpr S b1 = S(35) / 384, b3 = S(500) / 1113, b4 = S(125) / 192,
                     b5 = S(-2187) / 6784, b6 = S(11) / 84;
  // b - bhat
  static constexpr S e1 = S(71) / 57600, e3 = S(-71) / 16695, e4 = S(71) / 1920,
                     e5 = S(-17253) / 339200, e6 = S(22) / 525, e7 = S(-1) / 40;
};

template <class State>
typename State::Scalar scaled_rms(const State& e, const State& y0, const State& y1,
                                  double rtol, double atol) {
  using S = typename State::Scalar;
  auto sc = (atol + rtol * y0.array().abs().max(y1.array().abs())).eval();
  S acc = (e.array() / sc).square().sum();
  return std::sqrt(acc / S(e.size()));
}

}  // namespace detail

// Integrates y' = f(t, y) from (t0, y0) and returns y at every stop.  Stops
// must be monotone in one direction starting from t0.
template <class State, class Rhs>
std::vector<State> integrate_through(Rhs&& f, double t0, const State& y0,
                                     std::span<const double> stops,
                                     const OdeSettings& opt = {}) {
  using S = typename State::Scalar;
  using C = detail::Dopri<S>;
  std::vector<State> out;
  out.reserve(stops.size());
  if (stops.empty()) return out;
  const double t_end = stops.back();
  const double dir = t_end >= t0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    double prev = i == 0 ? t0 : stops[i - 1];
    if (dir * (stops[i] - prev) < 0)
      throw Error("integrate_through: stops not monotone");
  }

  double t = t0;
  State y = y0;
  std::size_t next = 0;
  while (next < stops.size() && stops[next] == t) out.push_back(y), ++next;
  if (next == stops.size()) return out;

  State k1 = f(t, y);
  // initial step, Hairer-Norsett-Wanner heuristic
  double h;
  {
    auto sc = (opt.atol + opt.rtol * y.array().abs()).eval();
    double d0 = std::sqrt((y.array() / sc).square().mean());
    double d1 = std::sqrt((k1.array() / sc).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, opt.max_step);
    State y1 = y + dir * h0 * k1;
    State k2 = f(t + dir * h0, y1);
    double d2 = std::sqrt(((k2 - k1).array() / sc).square().mean()) / h0;
    double m = std::max(d1, d2);
    double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 0.2);
    h = std::min({100 * h0, h1, opt.max_step});
  }

  long steps = 0;
  bool rejected = false;
  while (next < stops.size()) {
    if (++steps > opt.max_steps) throw IntegrationError("step budget exhausted", t0, t_end, t);
    const double target = stops[next];
    const double remaining = dir * (target - t);
    const bool lands = h >= remaining;
    const double h_try = lands ? remaining : h;
    if (h_try < opt.min_step * std::max(1.0, std::abs(t)))
      throw IntegrationError("step size underflow", t0, t_end, t);

    const double hs = dir * h_try;
    State k2 = f(t + C::c2 * hs, (y + hs * (C::a21 * k1)).eval());
    State k3 = f(t + C::c3 * hs, (y + hs * (C::a31 * k1 + C::a32 * k2)).eval());
    State k4 = f(t + C::c4 * hs, (y + hs * (C::a41 * k1 + C::a42 * k2 + C::a43 * k3)).eval());
    State k5 = f(t + C::c5 * hs,
                 (y + hs * (C::a51 * k1 + C::a52 * k2 + C::a53 * k3 + C::a54 * k4)).eval());
    State k6 = f(t + hs, (y + hs * (C::a61 * k1 + C::a62 * k2 + C::a63 * k3 + C::a64 * k4 +
                                    C::a65 * k5)).eval());
    State ynew = y + hs * (C::b1 * k1 + C::b3 * k3 + C::b4 * k4 + C::b5 * k5 + C::b6 * k6);
    State k7 = f(t + hs, ynew);
    State err = hs * (C::e1 * k1 + C::e3 * k3 + C::e4 * k4 + C::e5 * k5 + C::e6 * k6 + C::e7 * k7);
    double en = detail::scaled_rms(err, y, ynew, opt.rtol, opt.atol);
    if (!std::isfinite(en)) {
      if (!ynew.allFinite()) throw IntegrationError("non-finite state", t0, t_end, t);
      en = 1e10;
    }

    if (en <= 1.0) {
      t = lands ? target : t + hs;
      y = std::move(ynew);
      k1 = std::move(k7);
      while (next < stops.size() && dir * (stops[next] - t) <= 0) out.push_back(y), ++next;
      double fac = en == 0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      if (rejected) fac = std::min(fac, 1.0);
      // a clamped landing step does not shrink the natural step
      h = lands ? std::min(std::max(h, h_try * fac), opt.max_step)
                : std::min(h_try * fac, opt.max_step);
      rejected = false;
    } else {
      h = h_try * std::max(0.2, 0.9 * std::pow(en, -0.2));
      rejected = true;
    }
  }
  return out;
}

template <class State, class Rhs>
State integrate(Rhs&& f, double t0, double t1, const State& y0, const OdeSettings& opt = {}) {
  if (t0 == t1) return y0;
  double stop[1] = {t1};
  return integrate_through<State>(std::forward<Rhs>(f), t0, y0, std::span<const double>(stop, 1),
                                  opt)
      .front();
}

}  // namespace mudich
