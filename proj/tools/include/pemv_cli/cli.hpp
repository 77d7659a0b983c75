#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace pemv::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

// Parsed flag values shared by all subcommands.
struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;  // -1 keeps the configured seed list
  std::string out_dir;
  bool quiet = false;

  std::string data_root;
  std::string split_dir;
  std::string checkpoint;
  std::string views = "1..9";
  int trials = 1000;
  std::string pool;
  double train_fraction = 0.8;
};

// Builds the command tree bound to `options`. Exposed so tests can walk the
// registered flags.
std::unique_ptr<CLI::App> build_app(Options& options);

// Parses argv and dispatches. Never throws; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pemv::cli
