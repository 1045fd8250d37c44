#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "levisim/config.hpp"

namespace levisim {

enum ExitCode {
  exit_ok = 0,
  exit_config_error = 2,
  exit_instability = 3,
  exit_numerical_error = 4,
  exit_io_error = 5,
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::string out_dir;  // overrides config when non-empty
  int threads = 0;      // 0 = config value
  std::string format;   // "csv", "json" or empty = config value
};

// Runs the configured scenario, writes the manifest, result files and
// JSON summary into the output directory. Returns an ExitCode; on
// failure a machine-readable error category line goes to `log`.
int execute_scenario(const ExperimentConfig& config, const RunOptions& options,
                     std::ostream& log);

}  // namespace levisim
