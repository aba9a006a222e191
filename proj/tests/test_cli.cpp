#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mudich/cli.hpp"
#include "mudich/errors.hpp"

using namespace mudich;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json diag() {
  return json::parse(R"J({
    "seed": 5,
    "linear": {"preset": "diag_hyperbolic"},
    "perturbation": {"f": ["0", "0.1*sin(x1)"], "delta_f": 0.1},
    "certificates": {"dichotomy": {"D": 1, "lambda_s": -1, "lambda_u": 1}},
    "samples": {"admissible": 200, "gronwall": 10}
  })J");
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mudich_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_scenario(const fs::path& dir, const json& j) {
  auto p = dir / "scenario.json";
  std::ofstream(p) << j.dump();
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("scenario parsing") {
  auto sc = parse_scenario(diag());
  CHECK(sc.seed == 5);
  CHECK(sc.seed_given);
  CHECK(sc.dichotomy->lambda_s == -1);
  CHECK(!sc.growth_cert);
  CHECK(sc.samples.admissible == 200);
  CHECK(sc.samples.grid.a == -10);

  auto bad = diag();
  bad["linear"]["presett"] = "x";
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
  bad = diag();
  bad["extra"] = 1;
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
  bad = diag();
  bad.erase("linear");
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
  bad = diag();
  bad["samples"]["grid"] = {1, 0, 0.5};
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
  bad = diag();
  bad["schema"] = 2;
  CHECK_THROWS_AS(parse_scenario(bad), ConfigError);

  CHECK_THROWS_AS(build_perturbation(json::parse(R"J({"f": ["0"]})J"), 2), ConfigError);
  CHECK_THROWS_AS(build_perturbation(json::parse(R"J({"f": ["0", "sin("]})J"), 2), ConfigError);
  CHECK_THROWS_AS(build_rate(json::parse(R"J({"kind": "chi", "chi": "x1"})J")), ConfigError);
  CHECK_THROWS_AS(build_linear(json::parse(R"J({"preset": "nope"})J")), ConfigError);
  auto lin = build_linear(json::parse(R"J({"A": [["-1", 0], [0, "1"]], "pi0": [[1, 0], [0, 0]]})J"));
  CHECK(lin.dim() == 2);
  CHECK(lin.A(3)(0, 0) == -1);
}

TEST_CASE("scenario files accept comments") {
  auto dir = scratch("comments");
  std::ofstream(dir / "s.json") << "// note\n" << diag().dump();
  CHECK(load_scenario((dir / "s.json").string()).seed == 5);
  std::ofstream(dir / "t.json") << "{ not json";
  CHECK_THROWS_AS(load_scenario((dir / "t.json").string()), ConfigError);
}

TEST_CASE("world fits missing certificates") {
  auto j = diag();
  j["certificates"].erase("dichotomy");
  World w(parse_scenario(j));
  CHECK(w.dichotomy_fitted());
  CHECK(w.dichotomy().lambda_s == doctest::Approx(-1).epsilon(1e-4));
  CHECK(w.growth_fitted());
  CHECK(w.growth().lambda_max == doctest::Approx(1));
  CHECK(w.local_fitted());
  CHECK(w.local().D_tilde == doctest::Approx(std::exp(1.0)).epsilon(1e-6));

  auto bad = diag();
  bad["certificates"]["dichotomy"]["lambda_s"] = 0.1;
  CHECK_THROWS_AS(World{parse_scenario(bad)}, PreconditionError);
}

TEST_CASE("csv tables") {
  Report r("x");
  CHECK(to_csv(r.table("defects")) == "tau,t,defect\n");
  r.table("v-trace").rows.push_back({0.1, -1, 2.5e-20});
  CHECK(to_csv(r.tables().at("v-trace")) ==
        "t,V,dV/dt\n0.10000000000000001,-1,2.4999999999999999e-20\n");
  CHECK(plot_columns("trajectory", 3) == std::vector<std::string>{"t", "x1", "x2", "x3"});

  auto dir = scratch("csv");
  Report empty("y");
  emit_plot_data(empty, "crossings", (dir / "c.csv").string());
  CHECK(slurp(dir / "c.csv") == "tau,t,ell,kappa,defect,transport,min_dV\n");
  CHECK_THROWS_AS(emit_plot_data(empty, "histogram", (dir / "h.csv").string()), ConfigError);
}

TEST_CASE("report bookkeeping") {
  Report r("demo");
  r.check("m", "a", 1, "<", 2);
  r.check("m", "informational", 5, "<", 2).gating = false;
  CHECK(r.passed());
  r.check("m", "b", std::nan(""), "<", 2);
  r.check("m", "c", 3, "<=", 2);
  REQUIRE(r.first_failure());
  CHECK(r.first_failure()->name == "b");
  auto j = r.to_json();
  CHECK(j["schema"] == kReportSchema);
  CHECK(j["first_failure"] == "m/b");
  CHECK(j["checks"][2]["value"].is_null());
}

TEST_CASE("exit codes") {
  auto dir = scratch("exit");
  std::ostringstream log;
  RunOptions opt;
  opt.scenario = write_scenario(dir, diag());
  opt.out = (dir / "out").string();

  CHECK(run("validate", opt, log) == kPass);
  CHECK(fs::exists(dir / "out" / "validate.json"));
  auto first = slurp(dir / "out" / "validate.json");
  CHECK(run("validate", opt, log) == kPass);
  CHECK(slurp(dir / "out" / "validate.json") == first);
  auto j = json::parse(first);
  CHECK(j["schema"] == kReportSchema);
  CHECK(j["gates"].size() == 5);

  CHECK(run("frobnicate", opt, log) == kInputError);
  opt.tol_scale = 0;
  CHECK(run("validate", opt, log) == kInputError);
  opt.tol_scale = 1;

  auto noseed = diag();
  noseed.erase("seed");
  opt.scenario = write_scenario(dir, noseed);
  CHECK(run("check", opt, log) == kInputError);

  auto small = diag();
  small["certificates"]["growth"] = {{"D", 1}, {"lambda_max", 0.5}};
  opt.scenario = write_scenario(dir, small);
  std::ostringstream flog;
  CHECK(run("validate", opt, flog) == kCheckFailed);
  CHECK(flog.str().find("FAILED: nonlinear/gronwall_bounds") != std::string::npos);

  auto strong = diag();
  strong["perturbation"] = {{"f", {"0", "0.6*sin(x1)"}}, {"delta_f", 0.6}};
  opt.scenario = write_scenario(dir, strong);
  std::ostringstream glog;
  CHECK(run("manifold", opt, glog) == kCheckFailed);
  CHECK(glog.str().find("δ̃_f < 1") != std::string::npos);

  opt.scenario = (dir / "missing.json").string();
  CHECK(run("validate", opt, log) == kInputError);
}

TEST_CASE("seed and tolerance scale reach the samplers") {
  auto j = diag();
  World w(parse_scenario(j));
  auto a = run_stage("validate", w, 1, 1).to_json();
  auto b = run_stage("validate", w, 2, 1).to_json();
  CHECK(a["meta"]["seed"] == 1);
  CHECK(a["checks"] != b["checks"]);
  auto loose = run_stage("validate", w, 1, 10).to_json();
  CHECK(loose["checks"][4]["threshold"].get<double>() ==
        doctest::Approx(10 * a["checks"][4]["threshold"].get<double>()));
  CHECK_THROWS_AS(run_stage("nope", w, 1, 1), ConfigError);
}
