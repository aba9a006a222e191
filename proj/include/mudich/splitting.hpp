#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mudich/manifolds.hpp"

namespace mudich {

struct SplitSettings {
  double fp_tol = 1e-10;
  int max_iter = 100;
  // false drops the manifold graphs and composes bare leaves (negative control)
  bool straighten = true;
};

// Decoupling map S(t, .) built from the two foliations, with its inverse.
class SplitMap {
 public:
  explicit SplitMap(const ManifoldSolver& m, SplitSettings s = {});

  Vec operator()(double t, const Vec& x) const;
  Vec inverse(double t, const Vec& z) const;

  // contraction constant of the inverse iteration: Lip(h_s) + Lip(h_u), gated below 1
  double contraction() const { return lip_sum_; }
  bool contraction_ok() const { return lip_sum_ < 1; }
  // predicted sweep count ceil(log fp_tol / log Lip)
  int iteration_bound() const;
  int last_iterations() const { return last_iter_; }

  const SplitSettings& settings() const { return s_; }
  const ManifoldSolver& solver() const { return m_; }

 private:
  const ManifoldSolver& m_;
  SplitSettings s_;
  double lip_sum_;
  mutable int last_iter_ = 0;
  Vec graph_point(Side side, double t, const Vec& x) const;
};

// x_s' = A x_s + pi f~(t, x_s) and the mirrored unstable equation.  Lifted mode reads them
// off the full flow through the manifolds; direct mode integrates a given straightened field.
class DecoupledFlows {
 public:
  explicit DecoupledFlows(const ManifoldSolver& m, bool straightened = true);
  DecoupledFlows(const ProjectionFamily& fam, const Perturbation& straight, OdeSettings ode = {});
  DecoupledFlows(const DecoupledFlows&) = delete;
  DecoupledFlows& operator=(const DecoupledFlows&) = delete;

  Vec operator()(Side side, double t, double tau, const Vec& x0) const;
  std::vector<Vec> through(Side side, double tau, const Vec& x0,
                           std::span<const double> stops) const;
  // t -> x(t), lifting x0 once
  std::function<Vec(double)> trajectory(Side side, double tau, const Vec& x0) const;
  // max ||(other projection)(t) x(t)|| over the stops
  double subspace_residual(Side side, double tau, const Vec& x0,
                           std::span<const double> stops) const;

  bool direct() const { return direct_; }
  const ProjectionFamily& family() const { return fam_; }

 private:
  const ProjectionFamily& fam_;
  const ManifoldSolver* m_ = nullptr;
  bool straightened_ = true, direct_ = false;
  std::optional<Perturbation> ps_, pu_;
  std::optional<NonlinearFlow> fs_, fu_;
  Mat proj(Side side, double t) const;
};

struct SplitSample {
  double tau = 0, t = 0;
  Vec x;
};

std::vector<SplitSample> sample_split(int n, std::size_t count, double tau_box, double span,
                                      double radius, unsigned long long seed);

struct RoundTripReport {
  double forward_inverse = 0;  // max ||S(t, S^(t, x)) - x||
  double inverse_forward = 0;  // max ||S^(t, S(t, x)) - x||
  double zero = 0;             // ||S(t, 0)||
  std::size_t samples = 0;
  double tolerance = 0;
  bool passed = false;
};

RoundTripReport check_split_roundtrip(const SplitMap& sm, std::span<const SplitSample> samples,
                                      double tol = 1e-6);

struct ConjugationRow {
  double tau = 0, t = 0, forward = 0, inverse = 0;
};

struct SplitConjugationReport {
  double forward = 0;  // S(t, N(t,tau,x)) against the decoupled flows of S(tau, x)
  double inverse = 0;  // S^ side of the same identity
  std::vector<ConjugationRow> rows;
  double tolerance = 0;
  bool passed = false;
};

SplitConjugationReport verify_split_conjugation(const SplitMap& sm, const DecoupledFlows& df,
                                                const NonlinearFlow& full,
                                                std::span<const SplitSample> samples,
                                                double tol = 1e-5);

}  // namespace mudich
