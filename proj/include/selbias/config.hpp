#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "selbias/providers.hpp"
#include "selbias/runner.hpp"
#include "selbias/stats.hpp"

namespace selbias {

/// JSON run configuration:
///   {"grid": {...}, "providers": [...], "store": "runs/x",
///    "bootstrap": {"replicates": 3000, "seed": 7}, "parallelism": 8}
struct RunConfig {
  ConditionGrid grid;
  std::vector<ProviderConfig> providers;
  std::filesystem::path store;
  BootstrapConfig bootstrap;
  int parallelism = 1;
  bool strict_json = false;
  int max_consecutive_errors = 20;

  /// Throws ValidationError when a grid provider id has no config or
  /// parallelism < 1.
  void validate() const;
};

/// Relative paths (store, bias model files) resolve against `base_dir`.
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

/// Parses and validates `path`. Errors are rethrown as ValidationError with a
/// "file:line: " prefix pointing at the offending key when it can be found.
RunConfig load_run_config(const std::filesystem::path& path);

/// 1-based line of the JSON key or value a field path such as
/// "grid.temperatures[2]" or "providers[sim].model" refers to; 0 if unknown.
int locate_field_line(const std::string& text, const std::string& message);

ProviderMap build_providers(const std::vector<ProviderConfig>& configs);

}  // namespace selbias
