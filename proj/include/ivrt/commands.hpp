#pragma once

#include <string>
#include <vector>

#include "ivrt/data.hpp"

namespace ivrt {

struct Artifact {
  std::string name;  // file name relative to the output directory
  std::string content;
};

struct CommandResult {
  std::string report;  // JSON with top-level "spec_version": "1"
  std::vector<Artifact> artifacts;
};

// Commands: estimate, diagnose, frontier, target-prte, prd-check, simulate.
//
// `config_json` is an object with any of
//   input, schema {y, d, z, cluster, cell, group, drop_missing},
//   cluster, cell, group        column names (override the schema)
//   weights                     "ew" | "csw" | [w_1, ..., w_L] | {"file": path}
//   policy                      object or {"file": path}
//   spec                        simulation spec object or {"file": path}
//   grid, tol, seed, R, n, threads, lenient, auto_flip, scan, min_cell_size
//
// When `data` is non-null it replaces the input/schema lookup.
CommandResult run_command(const std::string& command, const std::string& config_json,
                          const Dataset* data = nullptr);

const std::vector<std::string>& command_names();

}  // namespace ivrt
