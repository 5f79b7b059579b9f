#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selbias/domain.hpp"

namespace selbias {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trial reduced to what the estimators need. Objects are pool indices.
struct CompactTrial {
  bool parsed = false;
  bool primacy = false;
  bool correspondence = false;
  bool correct_count = false;
  std::vector<std::uint8_t> objects;  // objects[p-1] is the pool index at position p
  std::uint32_t selected = 0;         // bit p-1 set when position p was selected
};

/// Non-error trials of one pool kind, pre-digested for repeated resampling.
class TrialCorpus {
 public:
  /// Throws StatsError when an input label is not in the pool.
  TrialCorpus(std::span<const TrialRecord> records, PoolKind pool_kind);

  std::size_t size() const noexcept { return trials_.size(); }
  bool empty() const noexcept { return trials_.empty(); }
  const CompactTrial& operator[](std::size_t i) const { return trials_[i]; }
  const ObjectPool& pool() const noexcept { return pool_; }
  /// Common list length, or nullopt when lengths differ.
  std::optional<int> list_length() const noexcept { return list_length_; }

  /// 0..size()-1, the sample that uses every trial once.
  std::vector<std::uint32_t> all() const;

 private:
  ObjectPool pool_;
  std::vector<CompactTrial> trials_;
  std::optional<int> list_length_;
};

using Sample = std::span<const std::uint32_t>;

struct HeadlineRates {
  double primacy = 0.0;
  double correspondence = 0.0;
  double correct_count = 0.0;
  std::size_t trials = 0;
};

struct ProbabilityEstimate {
  std::string key;  // position number or object label
  double p_total = 0.0;
  double p_primacy_part = 0.0;
  double p_nonprimacy_part = 0.0;
  double se = 0.0;
  std::int64_t n_opportunities = 0;
  std::int64_t selected_primacy = 0;
  std::int64_t selected_nonprimacy = 0;

  bool defined() const noexcept { return n_opportunities > 0; }
  std::int64_t selected() const noexcept { return selected_primacy + selected_nonprimacy; }
};

struct JointCell {
  std::int64_t count_selected = 0;
  std::int64_t count_present = 0;
  double p = 0.0;
};

struct JointTable {
  std::map<std::pair<ObjectLabel, int>, JointCell> cells;

  std::int64_t total_selected() const;
  /// Recomputes p from the counts.
  void refresh();
};

struct MIResult {
  double total_nats = 0.0;
  std::map<ObjectLabel, double> per_object_contribution;
  // Miller-Madow term, included in total_nats but not in the contributions.
  double bias_correction = 0.0;
};

struct MIOptions {
  bool miller_madow = false;
};

struct BootstrapConfig {
  int replicates = 3000;
  std::uint64_t seed = 0;
};

struct UniformBaselines {
  double per_position_p = 0.0;
  double per_object_p = 0.0;
  double primacy_p = 0.0;
  // primacy_p == 1 / primacy_denominator exactly
  std::uint64_t primacy_denominator = 1;
};

HeadlineRates headline_rates(const TrialCorpus& corpus, Sample sample);
HeadlineRates headline_rates(const TrialCorpus& corpus);
/// Throws StatsError on an empty span or mixed conditions.
HeadlineRates headline_rates(std::span<const TrialRecord> trials, PoolKind pool_kind);

std::vector<ProbabilityEstimate> position_probability(const TrialCorpus& corpus, int list_length,
                                                      Sample sample);
std::vector<ProbabilityEstimate> position_probability(const TrialCorpus& corpus, int list_length);

std::vector<ProbabilityEstimate> object_probability(const TrialCorpus& corpus, Sample sample);
std::vector<ProbabilityEstimate> object_probability(const TrialCorpus& corpus);

JointTable joint_probability(const TrialCorpus& corpus);

/// Plug-in estimate over selected (object, source position) pairs, in nats.
MIResult mutual_information(const JointTable& table, const MIOptions& options = {});

/// Values of one estimator on a resample; NaN marks a key undefined there.
using Estimator = std::function<std::vector<double>(const TrialCorpus&, Sample)>;

/// Standard deviation of `estimator` across trial-level resamples with
/// replacement. Keys undefined in a replicate are skipped for that replicate.
std::vector<double> bootstrap_se(const TrialCorpus& corpus, const Estimator& estimator,
                                 const BootstrapConfig& config);

/// Fills `se` on position and object estimates in place.
void attach_position_se(std::vector<ProbabilityEstimate>& estimates, const TrialCorpus& corpus,
                        int list_length, const BootstrapConfig& config);
void attach_object_se(std::vector<ProbabilityEstimate>& estimates, const TrialCorpus& corpus,
                      const BootstrapConfig& config);

/// Throws StatsError unless 1 <= select_count <= list_length <= 26.
UniformBaselines uniform_baselines(int list_length, int select_count);

}  // namespace selbias
