#pragma once

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mudich/conjugacy.hpp"

namespace mudich {

struct Window {
  double a = -5, b = 5, step = 0.5;
  std::vector<double> grid() const { return uniform_grid(a, b, step); }
};

struct SampleBoxes {
  Window grid{-10, 10, 0.5};       // dichotomy / growth certification grid
  Window window{-5, 5, 0.5};       // Lyapunov and conjugacy constants
  std::size_t admissible = 2000;
  std::size_t gronwall = 100;
  std::size_t strictness = 20;
  std::size_t s_props = 50;
  std::size_t manifold = 10;
  std::size_t split = 50;
  std::size_t split_conj = 20;
  std::size_t conjugacy = 30;
  std::size_t e2e = 20;
  int mesh = 3;                    // points per axis for the homeomorphism mesh
  double tau_box = 5, span = 2, radius = 2;
};

struct Scenario {
  std::string source;  // path or "<inline>"
  nlohmann::json raw;
  unsigned long long seed = 1;
  bool seed_given = false;  // check mode refuses to run without a seed
  std::string out = "out";

  nlohmann::json growth, linear, perturbation;
  std::optional<DichotomyCertificate> dichotomy;
  std::optional<GrowthCertificate> growth_cert;
  std::optional<StrictCertificate> strict;
  std::optional<LocalBound> local;
  QuadSettings quad;
  LPSettings lp;
  SampleBoxes samples;
  double strict_T_sup = 30;
};

// throws ConfigError on unknown keys, wrong types or missing sections
Scenario parse_scenario(const nlohmann::json& j, std::string source = "<inline>");
Scenario load_scenario(const std::string& path);

GrowthRate build_rate(const nlohmann::json& spec);
LinearSystem build_linear(const nlohmann::json& spec);
Perturbation build_perturbation(const nlohmann::json& spec, int n);

// Every object the stages need, built once with stable addresses.  Certificates missing
// from the scenario are fitted on the certification grid and flagged as such.
class World {
 public:
  explicit World(const Scenario& sc);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const Scenario& scenario() const { return sc_; }
  const LinearSystem& system() const { return sys_; }
  const TransitionEvaluator& evaluator() const { return *ev_; }
  const ProjectionFamily& family() const { return *fam_; }
  const GrowthRate& rate() const { return rate_; }
  const Perturbation& perturbation() const { return p_; }
  const DichotomyCertificate& dichotomy() const { return dich_; }
  const GrowthCertificate& growth() const { return growth_; }
  bool dichotomy_fitted() const { return dich_fitted_; }
  bool growth_fitted() const { return growth_fitted_; }
  const LocalBound& local() const { return local_; }
  bool local_fitted() const { return local_fitted_; }

  const NonlinearFlow& flow() const;
  const QuadraticLyapunov& quadratic() const;
  const ManifoldSolver& manifolds() const;
  const SplitMap& split() const;
  const DecoupledFlows& decoupled() const;
  const ConjugacyMap& conjugacy() const;

 private:
  Scenario sc_;
  LinearSystem sys_;
  GrowthRate rate_;
  Perturbation p_;
  std::unique_ptr<TransitionEvaluator> ev_;
  std::unique_ptr<ProjectionFamily> fam_;
  DichotomyCertificate dich_;
  GrowthCertificate growth_;
  LocalBound local_;
  bool dich_fitted_ = false, growth_fitted_ = false, local_fitted_ = false;
  mutable std::unique_ptr<NonlinearFlow> flow_;
  mutable std::unique_ptr<QuadraticLyapunov> quad_;
  mutable std::unique_ptr<ManifoldSolver> man_;
  mutable std::unique_ptr<SplitMap> split_;
  mutable std::unique_ptr<DecoupledFlows> dec_;
  mutable std::unique_ptr<ConjugacyMap> conj_;
};

}  // namespace mudich
