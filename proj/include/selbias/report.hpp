#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "selbias/domain.hpp"
#include "selbias/runner.hpp"
#include "selbias/stats.hpp"

namespace selbias {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsBundle {
  Condition condition;
  std::string condition_id;
  bool partial = false;
  std::size_t trials = 0;        // non-error records analyzed
  std::size_t error_records = 0; // provider failures, excluded from N
  std::size_t corrupt_lines = 0;
  HeadlineRates headline;
  std::vector<double> headline_se;  // primacy, correspondence, correct_count
  std::vector<ProbabilityEstimate> positions;
  std::vector<ProbabilityEstimate> objects;
  JointTable joint;
  std::optional<MIResult> mi;  // nullopt when nothing parsed
  UniformBaselines baselines;

  std::string status() const { return partial ? "partial" : "complete"; }
};

struct AnalyzeOptions {
  BootstrapConfig bootstrap;
  MIOptions mi;
  /// Abort when more than this fraction of a condition's lines are corrupt.
  double max_corrupt_fraction = 0.01;
  /// Conditions analyzed concurrently; 0 uses every hardware thread.
  int parallelism = 0;
};

/// One bundle per manifest condition, in manifest order. Throws ReportError
/// when the manifest is missing, a condition has no usable records, or
/// corruption exceeds the configured fraction.
std::vector<MetricsBundle> analyze_run(const std::filesystem::path& run_dir,
                                       const AnalyzeOptions& options = {});

MetricsBundle analyze_condition(const Condition& condition,
                                std::span<const TrialRecord> records,
                                const AnalyzeOptions& options = {});

struct PipelineDelta {
  std::string two_step_condition_id;
  std::string direct_condition_id;
  std::string provider_id;
  std::string model;
  double temperature = 0.0;
  int list_length = 0;
  PoolKind pool_kind = PoolKind::letters;
  double two_step_primacy = 0.0;
  double direct_primacy = 0.0;
  std::optional<double> primacy_reduction_pct;  // undefined when direct primacy is 0
  double correct_count_delta = 0.0;             // direct - two_step
  double mi_delta = 0.0;                        // direct - two_step, NaN if either MI is missing
};

/// Treats `two_step` and `direct` as the two roles without checking their
/// pipelines, so swapping the arguments negates both deltas.
PipelineDelta compare_pair(const MetricsBundle& two_step, const MetricsBundle& direct);

struct PipelineComparison {
  std::vector<PipelineDelta> deltas;
  std::vector<std::string> notices;  // conditions without a counterpart
};

PipelineComparison compare_pipelines(const std::vector<MetricsBundle>& bundles);

/// "%.6g": six significant digits. NaN renders as an empty field.
std::string format_number(double value);

/// headline.csv, positions.csv, objects.csv, mi.csv. Returns the paths written.
std::vector<std::filesystem::path> emit_tables(const std::vector<MetricsBundle>& bundles,
                                               const std::filesystem::path& out_dir);

/// positions_plot.json, objects_plot.json, mi_plot.json.
std::vector<std::filesystem::path> emit_plot_data(const std::vector<MetricsBundle>& bundles,
                                                  const std::filesystem::path& out_dir);

/// pipelines.csv
std::filesystem::path emit_comparison(const PipelineComparison& comparison,
                                      const std::filesystem::path& out_dir);

}  // namespace selbias
