#include "mudich/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mudich/errors.hpp"

namespace mudich {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

double num(const json& j, const char* key, double fallback, const std::string& where) {
  return get<double>(j, key, fallback, where);
}

Window window(const json& j, Window fallback, const std::string& where) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [from, to, step]");
  Window w{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!(w.b > w.a && w.step > 0)) throw ConfigError(where + ": need from < to and step > 0");
  return w;
}

Mat matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a square array");
  const int n = static_cast<int>(j.size());
  Mat m(n, n);
  for (int i = 0; i < n; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != n)
      throw ConfigError(where + ": row " + std::to_string(i) + " has the wrong length");
    for (int k = 0; k < n; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(where + ": entries must be numbers");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

Expr expr(const json& j, const std::string& where) {
  if (j.is_number()) return Expr::literal(j.get<double>());
  if (!j.is_string()) throw ConfigError(where + ": expected a formula string");
  try {
    return Expr::parse(j.get<std::string>());
  } catch (const ParseError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

GrowthRate build_rate(const json& spec) {
  only_keys(spec, "growth", {"kind", "chi", "mu"});
  auto kind = get<std::string>(spec, "kind", "exponential", "growth");
  if (kind == "exponential") return GrowthRate::exponential();
  if (kind == "polynomial") return GrowthRate::polynomial();
  if (kind == "chi" || kind == "mu") {
    if (!spec.contains(kind)) throw ConfigError("growth." + kind + " is required for kind '" + kind + "'");
    Expr e = expr(spec[kind], "growth." + kind);
    if (e.depends_on_x()) throw ConfigError("growth." + kind + " may only depend on t");
    auto f = [e](double t) { return e.eval(t); };
    auto df = [e](double t) { return e.eval_dt(t).second; };
    return kind == "chi" ? GrowthRate::from_chi(f, df) : GrowthRate::custom(f, df);
  }
  throw ConfigError("growth.kind: unknown rate '" + kind + "'");
}

LinearSystem build_linear(const json& spec) {
  only_keys(spec, "linear", {"preset", "A", "pi0"});
  if (spec.contains("preset")) {
    if (spec.contains("A")) throw ConfigError("linear: give either preset or A, not both");
    return LinearSystem::preset(get<std::string>(spec, "preset", "", "linear"));
  }
  if (!spec.contains("A") || !spec.contains("pi0")) throw ConfigError("linear: A and pi0 are required");
  const json& a = spec["A"];
  Mat pi0 = matrix(spec["pi0"], "linear.pi0");
  const int n = static_cast<int>(pi0.rows());
  if (!a.is_array() || static_cast<int>(a.size()) != n)
    throw ConfigError("linear.A: expected " + std::to_string(n) + " rows");
  std::vector<std::vector<Expr>> rows;
  for (int i = 0; i < n; ++i) {
    if (!a[i].is_array() || static_cast<int>(a[i].size()) != n)
      throw ConfigError("linear.A: row " + std::to_string(i) + " has the wrong length");
    std::vector<Expr> row;
    for (int k = 0; k < n; ++k) {
      Expr e = expr(a[i][k], "linear.A");
      if (e.depends_on_x()) throw ConfigError("linear.A may only depend on t");
      row.push_back(e);
    }
    rows.push_back(std::move(row));
  }
  return LinearSystem(std::move(rows), pi0);
}

Perturbation build_perturbation(const json& spec, int n) {
  only_keys(spec, "perturbation", {"f", "delta_f", "theta"});
  if (!spec.contains("f")) throw ConfigError("perturbation.f is required");
  const json& f = spec["f"];
  if (!f.is_array() || static_cast<int>(f.size()) != n)
    throw ConfigError("perturbation.f: expected " + std::to_string(n) + " components");
  std::vector<Expr> comps;
  for (auto& c : f) comps.push_back(expr(c, "perturbation.f"));
  const double df = num(spec, "delta_f", 0, "perturbation");
  const double th = num(spec, "theta", 0, "perturbation");
  return Perturbation(std::move(comps), df, th);
}

Scenario parse_scenario(const json& j, std::string source) {
  only_keys(j, "scenario", {"schema", "seed", "out", "growth", "linear", "perturbation",
                            "certificates", "lyapunov", "lp", "samples"});
  Scenario sc;
  sc.source = std::move(source);
  sc.raw = j;
  if (get<int>(j, "schema", 1, "scenario") != 1) throw ConfigError("scenario.schema: only version 1 is known");
  sc.seed = get<unsigned long long>(j, "seed", 1, "scenario");
  sc.seed_given = j.contains("seed");
  sc.out = get<std::string>(j, "out", "out", "scenario");
  for (const char* k : {"linear", "perturbation"})
    if (!j.contains(k)) throw ConfigError(std::string("scenario: missing section '") + k + "'");
  sc.growth = j.value("growth", json::object());
  sc.linear = j["linear"];
  sc.perturbation = j["perturbation"];
  // fail on malformed sections now rather than when a stage first needs them
  build_rate(sc.growth);
  build_perturbation(sc.perturbation, build_linear(sc.linear).dim());

  if (j.contains("certificates")) {
    const json& c = j["certificates"];
    only_keys(c, "certificates", {"dichotomy", "growth", "strict", "local"});
    if (c.contains("dichotomy")) {
      const json& d = c["dichotomy"];
      only_keys(d, "certificates.dichotomy", {"D", "lambda_s", "lambda_u", "nu", "omega"});
      const std::string w = "certificates.dichotomy";
      sc.dichotomy = DichotomyCertificate{num(d, "D", 1, w), num(d, "lambda_s", -1, w),
                                          num(d, "lambda_u", 1, w), num(d, "nu", 0, w),
                                          num(d, "omega", 0, w)};
    }
    if (c.contains("growth")) {
      const json& g = c["growth"];
      only_keys(g, "certificates.growth", {"D", "lambda_max", "theta"});
      const std::string w = "certificates.growth";
      sc.growth_cert = GrowthCertificate{num(g, "D", 1, w), num(g, "lambda_max", 1, w),
                                         num(g, "theta", 0, w), std::nullopt};
    }
    if (c.contains("strict")) {
      const json& s = c["strict"];
      only_keys(s, "certificates.strict", {"C", "eps", "alpha", "beta"});
      const std::string w = "certificates.strict";
      sc.strict = StrictCertificate{num(s, "C", 1, w), num(s, "eps", 0, w), num(s, "alpha", -1, w),
                                    num(s, "beta", -1, w)};
    }
    if (c.contains("local")) {
      const json& l = c["local"];
      only_keys(l, "certificates.local", {"D_tilde", "c", "lambda_tilde"});
      const std::string w = "certificates.local";
      sc.local = LocalBound{num(l, "D_tilde", 1, w), num(l, "c", 1, w), num(l, "lambda_tilde", 0, w)};
    }
  }

  if (j.contains("lyapunov")) {
    const json& l = j["lyapunov"];
    only_keys(l, "lyapunov", {"eta", "T_cut", "quad_tol", "T_max", "T_sup"});
    sc.quad.eta = num(l, "eta", sc.quad.eta, "lyapunov");
    sc.quad.T_cut = num(l, "T_cut", sc.quad.T_cut, "lyapunov");
    sc.quad.quad_tol = num(l, "quad_tol", sc.quad.quad_tol, "lyapunov");
    sc.quad.T_max = num(l, "T_max", sc.quad.T_max, "lyapunov");
    sc.strict_T_sup = num(l, "T_sup", sc.strict_T_sup, "lyapunov");
  }

  if (j.contains("lp")) {
    const json& l = j["lp"];
    only_keys(l, "lp", {"T_h", "T_cap", "step", "fp_tol", "max_iter", "M_ref", "rho"});
    sc.lp.T_h = num(l, "T_h", sc.lp.T_h, "lp");
    sc.lp.T_cap = num(l, "T_cap", sc.lp.T_cap, "lp");
    sc.lp.step = num(l, "step", sc.lp.step, "lp");
    sc.lp.fp_tol = num(l, "fp_tol", sc.lp.fp_tol, "lp");
    sc.lp.max_iter = get<int>(l, "max_iter", sc.lp.max_iter, "lp");
    sc.lp.M_ref = num(l, "M_ref", sc.lp.M_ref, "lp");
    sc.lp.rho = num(l, "rho", sc.lp.rho, "lp");
  }

  if (j.contains("samples")) {
    const json& s = j["samples"];
    only_keys(s, "samples", {"grid", "window", "admissible", "gronwall", "strictness", "s_props",
                             "manifold", "split", "split_conj", "conjugacy", "e2e", "mesh",
                             "tau_box", "span", "radius"});
    auto& b = sc.samples;
    b.grid = window(s.value("grid", json()), b.grid, "samples.grid");
    b.window = window(s.value("window", json()), b.window, "samples.window");
    b.admissible = get<std::size_t>(s, "admissible", b.admissible, "samples");
    b.gronwall = get<std::size_t>(s, "gronwall", b.gronwall, "samples");
    b.strictness = get<std::size_t>(s, "strictness", b.strictness, "samples");
    b.s_props = get<std::size_t>(s, "s_props", b.s_props, "samples");
    b.manifold = get<std::size_t>(s, "manifold", b.manifold, "samples");
    b.split = get<std::size_t>(s, "split", b.split, "samples");
    b.split_conj = get<std::size_t>(s, "split_conj", b.split_conj, "samples");
    b.conjugacy = get<std::size_t>(s, "conjugacy", b.conjugacy, "samples");
    b.e2e = get<std::size_t>(s, "e2e", b.e2e, "samples");
    b.mesh = get<int>(s, "mesh", b.mesh, "samples");
    b.tau_box = num(s, "tau_box", b.tau_box, "samples");
    b.span = num(s, "span", b.span, "samples");
    b.radius = num(s, "radius", b.radius, "samples");
    if (b.mesh < 2) throw ConfigError("samples.mesh must be at least 2");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(j, path);
}

// ---------------------------------------------------------------- world

World::World(const Scenario& sc)
    : sc_(sc), sys_(build_linear(sc.linear)), rate_(build_rate(sc.growth)),
      p_(build_perturbation(sc.perturbation, sys_.dim())) {
  ev_ = std::make_unique<TransitionEvaluator>(sys_);
  fam_ = std::make_unique<ProjectionFamily>(*ev_);
  auto grid = sc.samples.grid.grid();
  if (sc.dichotomy) {
    dich_ = *sc.dichotomy;
  } else {
    dich_ = fit_dichotomy_constants(*ev_, *fam_, rate_, grid).certificate();
    dich_fitted_ = true;
  }
  dich_.validate();
  if (sc.growth_cert) {
    growth_ = *sc.growth_cert;
  } else {
    // sampled sup of ||A(t)|| / (log mu)'(t): Gronwall on the linear part
    double lam = 0;
    for (double t : grid) lam = std::max(lam, spectral_norm(sys_.A(t)) / rate_.dlog(t));
    growth_ = GrowthCertificate{1, lam, p_.theta(), std::nullopt};
    growth_fitted_ = true;
  }
  if (sc.local) {
    local_ = *sc.local;
  } else {
    // sampled sup of ||Psi(t, s)|| over grid pairs at most one unit apart
    double sup = 1;
    for (double s : grid)
      for (double t : grid)
        if (t != s && std::abs(t - s) <= 1 + 1e-12) sup = std::max(sup, spectral_norm(ev_->transition(t, s)));
    local_ = LocalBound{sup * (1 + 1e-9), 1, 0};
    local_fitted_ = true;
  }
  growth_.local = local_;
  growth_.validate();
}

const NonlinearFlow& World::flow() const {
  if (!flow_) flow_ = std::make_unique<NonlinearFlow>(sys_, p_);
  return *flow_;
}

const QuadraticLyapunov& World::quadratic() const {
  if (!quad_) quad_ = std::make_unique<QuadraticLyapunov>(*fam_, rate_, dich_, sc_.quad, local_);
  return *quad_;
}

const ManifoldSolver& World::manifolds() const {
  if (!man_) man_ = std::make_unique<ManifoldSolver>(*fam_, p_, rate_, dich_, sc_.lp);
  return *man_;
}

const SplitMap& World::split() const {
  if (!split_) {
    SplitSettings s;
    s.fp_tol = sc_.lp.fp_tol;
    split_ = std::make_unique<SplitMap>(manifolds(), s);
  }
  return *split_;
}

const DecoupledFlows& World::decoupled() const {
  if (!dec_) dec_ = std::make_unique<DecoupledFlows>(manifolds());
  return *dec_;
}

const ConjugacyMap& World::conjugacy() const {
  if (!conj_) conj_ = std::make_unique<ConjugacyMap>(split(), decoupled(), quadratic());
  return *conj_;
}

}  // namespace mudich
