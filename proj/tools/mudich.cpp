#include <CLI11.hpp>

#include <iostream>

#include "mudich/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mudich: nonuniform dichotomy and linearization checks"};
  app.require_subcommand(1);
  mudich::RunOptions opt;
  std::string out;
  unsigned long long seed = 0;
  std::string command;

  for (auto& name : mudich::commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--scenario", opt.scenario, "scenario JSON file")->required();
    sub->add_option("--out", out, "output directory (default: scenario \"out\")");
    sub->add_option("--seed", seed, "sampler seed (default: scenario \"seed\")");
    sub->add_option("--tol-scale", opt.tol_scale, "multiplies every pass threshold")
        ->check(CLI::PositiveNumber);
    sub->callback([&, name, sub] {
      command = name;
      if (sub->count("--out")) opt.out = out;
      if (sub->count("--seed")) opt.seed = seed;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mudich::kInputError;
  }
  return mudich::run(command, opt, std::cout);
}
