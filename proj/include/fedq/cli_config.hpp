#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedq/orchestrator.hpp"

namespace fedq {

// Everything the command line can set. A JSON config file fills this first,
// explicit flags override it afterwards.
struct CliOptions {
  std::optional<std::string> dataset;
  std::optional<std::string> schema;
  std::optional<std::string> manifest;
  std::optional<std::string> out;
  std::vector<std::string> strategies{"fedq"};
  std::size_t select_n = 30;
  std::size_t repeats = 5;
  std::optional<std::size_t> subsample_rows;
  RunConfig run;
};

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

/// Applies a JSON config document onto `opts`. Unknown keys are rejected.
void apply_config_json(const std::string& text, CliOptions& opts);

/// The resolved configuration, in the same key layout apply_config_json reads.
std::string resolved_config_json(const CliOptions& opts);

/// Strategy for one spec string; bare "fedq"/"random" take opts.select_n.
Strategy resolve_strategy(const std::string& spec, std::size_t select_n);

/// Root seed -> partition seed, so --seed alone fixes the whole pipeline.
std::uint64_t partition_seed(std::uint64_t root);

}  // namespace fedq
