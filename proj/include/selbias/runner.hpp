#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "selbias/domain.hpp"
#include "selbias/extraction.hpp"
#include "selbias/providers.hpp"

namespace selbias {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConditionGrid {
  std::vector<std::string> providers;
  std::vector<double> temperatures;
  std::vector<int> list_lengths;
  std::vector<PoolKind> pool_kinds;
  std::vector<Pipeline> pipelines;
  int select_count = 3;
  int trials = 1000;
  std::uint64_t master_seed = 0;
  bool shuffle_order = true;

  void validate() const;
};

Json to_json(const ConditionGrid& grid);
/// Throws ValidationError naming the field path.
ConditionGrid grid_from_json(const Json& j);

using ProviderMap = std::map<std::string, std::shared_ptr<Provider>>;

/// Cross product in provider, temperature, length, pool, pipeline order.
std::vector<Condition> expand_grid(const ConditionGrid& grid, const ProviderMap& providers);

enum class ConditionStatus { pending, complete, partial, failed };

std::string_view to_string(ConditionStatus status);
ConditionStatus parse_condition_status(std::string_view text);

struct ConditionSummary {
  std::string condition_id;
  int target = 0;
  int completed = 0;  // non-error records
  int errors = 0;     // trial_error records
  int parsed = 0;
  int primacy = 0;
  int correspondence = 0;
  int correct_count = 0;
  int executed_now = 0;  // trials (including errors) run by this call
  ConditionStatus status = ConditionStatus::pending;
  std::optional<std::string> failure;
  bool provider_exhausted = false;
};

struct ManifestEntry {
  Condition condition;
  std::string condition_id;
  std::string file;
  ConditionSummary summary;
};

struct RunManifest {
  std::string grid_hash;
  Json grid;
  ExtractMode extract_mode = ExtractMode::lenient;
  std::vector<ManifestEntry> conditions;

  std::int64_t total_target() const;
  bool complete() const;
};

Json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const Json& j);

inline constexpr const char* kManifestFile = "manifest.json";

std::optional<RunManifest> load_manifest(const std::filesystem::path& run_dir);
void save_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest);

struct RunOptions {
  int parallelism = 1;
  ExtractMode extract_mode = ExtractMode::lenient;
  int max_consecutive_errors = 20;
  /// Stop each condition after this many new trials (resume testing, budgets).
  std::optional<int> trial_limit;
  std::function<void(const ConditionSummary&)> on_condition_done;
};

/// Trial counts per provider call made for one pipeline.
int calls_per_trial(Pipeline pipeline);

/// One trial: sample the list, query the provider, extract, flag. Provider
/// failures come back as records with `error` set rather than as exceptions.
TrialRecord run_trial(const Condition& condition, std::int64_t trial_index, Provider& provider,
                      ExtractMode mode = ExtractMode::lenient);

/// Tops the condition file up to `condition.trials` non-error records.
/// Throws StoreError on write failure; records written so far stay valid.
ConditionSummary run_condition(const Condition& condition, Provider& provider,
                               const std::filesystem::path& file, const RunOptions& options = {});

/// Manifest for the grid without running anything.
RunManifest plan_grid(const ConditionGrid& grid, const ProviderMap& providers,
                      ExtractMode mode = ExtractMode::lenient);

/// Runs every condition to completion, persisting the manifest after each.
/// Throws ValidationError before any provider call when the grid is invalid,
/// a provider is unknown, or an existing manifest belongs to another grid.
RunManifest run_grid(const ConditionGrid& grid, const ProviderMap& providers,
                     const std::filesystem::path& run_dir, const RunOptions& options = {});

ConditionSummary summarize(const std::vector<TrialRecord>& records, const Condition& condition);

}  // namespace selbias
