#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mudich/report.hpp"
#include "mudich/scenario.hpp"

namespace mudich {

enum ExitCode { kPass = 0, kCheckFailed = 1, kInputError = 2 };

struct RunOptions {
  std::string scenario;
  std::optional<std::string> out;
  std::optional<unsigned long long> seed;
  double tol_scale = 1;
  bool write = true;
};

const std::vector<std::string>& commands();

// Runs one stage (or all of them for "check") into a report.  Gate failures and numerical
// breakdowns become failed checks; ConfigError and PreconditionError propagate.
Report run_stage(const std::string& command, const World& w, unsigned long long seed,
                 double tol_scale);

// load, run, write, summarize; returns the process exit code
int run(const std::string& command, const RunOptions& opt, std::ostream& log);

}  // namespace mudich
