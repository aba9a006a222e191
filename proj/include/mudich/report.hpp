#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace mudich {

inline constexpr const char* kReportSchema = "mudich-report/1";

struct CheckResult {
  std::string module, name;
  double value = 0, threshold = 0;
  std::string relation;  // how value is compared with threshold: "<", "<=", ">", ">="
  bool passed = false;
  bool gating = true;    // false: reported only (documented expected failures)
  std::string detail;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// CSV kinds and their fixed leading columns; "trajectory" appends x1..xn
const std::vector<std::string>& plot_kinds();
std::vector<std::string> plot_columns(const std::string& kind, int n = 0);

class Report {
 public:
  explicit Report(std::string command) : command_(std::move(command)) {}

  CheckResult& add(CheckResult c);
  // value compared against threshold with the relation; returns the stored check
  CheckResult& check(const std::string& module, const std::string& name, double value,
                     const std::string& relation, double threshold, std::string detail = {});
  void fail(const std::string& module, const std::string& name, const std::string& detail);
  void gate(const std::string& name, double slack, bool applicable, bool ok);

  nlohmann::json& meta() { return meta_; }
  nlohmann::json& data(const std::string& module) { return data_[module]; }
  Table& table(const std::string& kind, int n = 0);
  // wall-clock seconds per stage; kept out of the JSON so reports stay byte-stable
  void timing(const std::string& stage, double seconds) { timings_[stage] = seconds; }
  const std::map<std::string, double>& timings() const { return timings_; }

  const std::string& command() const { return command_; }
  const std::vector<CheckResult>& checks() const { return checks_; }
  const std::map<std::string, Table>& tables() const { return tables_; }
  bool passed() const;
  const CheckResult* first_failure() const;

  nlohmann::json to_json() const;
  // <dir>/<command>.json plus one CSV per table kind present
  std::vector<std::string> write(const std::string& dir) const;

 private:
  std::string command_;
  nlohmann::json meta_ = nlohmann::json::object();
  nlohmann::json data_ = nlohmann::json::object();
  nlohmann::json gates_ = nlohmann::json::array();
  std::vector<CheckResult> checks_;
  std::map<std::string, Table> tables_;
  std::map<std::string, double> timings_;
};

std::string to_csv(const Table& t);
// writes the table of that kind (header only when absent); ConfigError on unknown kinds
void emit_plot_data(const Report& r, const std::string& kind, const std::string& path, int n = 0);

}  // namespace mudich
