#include "mudich/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mudich/errors.hpp"

namespace mudich {

using nlohmann::json;

const std::vector<std::string>& plot_kinds() {
  static const std::vector<std::string> k{"v-trace", "defects", "trajectory", "crossings"};
  return k;
}

std::vector<std::string> plot_columns(const std::string& kind, int n) {
  if (kind == "v-trace") return {"t", "V", "dV/dt"};
  if (kind == "defects") return {"tau", "t", "defect"};
  if (kind == "crossings") return {"tau", "t", "ell", "kappa", "defect", "transport", "min_dV"};
  if (kind == "trajectory") {
    std::vector<std::string> c{"t"};
    for (int i = 1; i <= n; ++i) c.push_back("x" + std::to_string(i));
    return c;
  }
  throw ConfigError("unknown plot kind '" + kind + "'");
}

CheckResult& Report::add(CheckResult c) {
  checks_.push_back(std::move(c));
  return checks_.back();
}

CheckResult& Report::check(const std::string& module, const std::string& name, double value,
                           const std::string& relation, double threshold, std::string detail) {
  bool ok;
  if (relation == "<") ok = value < threshold;
  else if (relation == "<=") ok = value <= threshold;
  else if (relation == ">") ok = value > threshold;
  else if (relation == ">=") ok = value >= threshold;
  else throw Error("bad relation " + relation);
  if (std::isnan(value)) ok = false;
  return add({module, name, value, threshold, relation, ok, true, std::move(detail)});
}

void Report::fail(const std::string& module, const std::string& name, const std::string& detail) {
  add({module, name, std::nan(""), 0, "", false, true, detail});
}

void Report::gate(const std::string& name, double slack, bool applicable, bool ok) {
  json g{{"name", name}, {"applicable", applicable}, {"passed", ok}};
  g["slack"] = std::isfinite(slack) ? json(slack) : json(nullptr);
  gates_.push_back(std::move(g));
}

Table& Report::table(const std::string& kind, int n) {
  auto it = tables_.find(kind);
  if (it == tables_.end()) it = tables_.emplace(kind, Table{plot_columns(kind, n), {}}).first;
  return it->second;
}

bool Report::passed() const { return first_failure() == nullptr; }

const CheckResult* Report::first_failure() const {
  for (auto& c : checks_)
    if (c.gating && !c.passed) return &c;
  return nullptr;
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json Report::to_json() const {
  json j;
  j["schema"] = kReportSchema;
  j["command"] = command_;
  j["meta"] = meta_;
  j["passed"] = passed();
  if (auto f = first_failure()) j["first_failure"] = f->module + "/" + f->name;
  j["gates"] = gates_;
  json cs = json::array();
  for (auto& c : checks_) {
    json e{{"module", c.module}, {"name", c.name}, {"passed", c.passed}, {"gating", c.gating}};
    e["value"] = number(c.value);
    if (!c.relation.empty()) {
      e["relation"] = c.relation;
      e["threshold"] = number(c.threshold);
    }
    if (!c.detail.empty()) e["detail"] = c.detail;
    cs.push_back(std::move(e));
  }
  j["checks"] = std::move(cs);
  j["data"] = data_;
  json tabs = json::object();
  for (auto& [k, t] : tables_) tabs[k] = {{"columns", t.columns}, {"rows", t.rows.size()}};
  j["tables"] = std::move(tabs);
  return j;
}

std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += "\n";
  char buf[32];
  for (auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r[i]);
      s += (i ? "," : "");
      s += buf;
    }
    s += "\n";
  }
  return s;
}

void emit_plot_data(const Report& r, const std::string& kind, const std::string& path, int n) {
  auto cols = plot_columns(kind, n);
  auto it = r.tables().find(kind);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << (it == r.tables().end() ? to_csv(Table{cols, {}}) : to_csv(it->second));
}

std::vector<std::string> Report::write(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  std::vector<std::string> files;
  const std::string js = dir + "/" + command_ + ".json";
  {
    std::ofstream out(js);
    if (!out) throw ConfigError("cannot write '" + js + "'");
    out << to_json().dump(2) << "\n";
  }
  files.push_back(js);
  for (auto& [kind, t] : tables_) {
    std::string csv = dir + "/" + command_ + "_" + kind + ".csv";
    std::ofstream out(csv);
    if (!out) throw ConfigError("cannot write '" + csv + "'");
    out << to_csv(t);
    files.push_back(csv);
  }
  return files;
}

}  // namespace mudich
