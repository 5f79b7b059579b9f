#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace selbias {

using Json = nlohmann::json;

/// Error raised when a domain value violates its invariants.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PoolKind { letters, numbers };
enum class Pipeline { direct, two_step };

std::string_view to_string(PoolKind kind);
std::string_view to_string(Pipeline pipeline);
PoolKind parse_pool_kind(std::string_view text);
Pipeline parse_pipeline(std::string_view text);

/// A selectable object, always carried as text ("A".."Z" or "1".."26").
class ObjectLabel {
 public:
  ObjectLabel() = default;
  explicit ObjectLabel(std::string text) : text_(std::move(text)) {}

  const std::string& text() const noexcept { return text_; }
  bool empty() const noexcept { return text_.empty(); }

  friend auto operator<=>(const ObjectLabel&, const ObjectLabel&) = default;

 private:
  std::string text_;
};

inline constexpr int kPoolSize = 26;

struct ObjectPool {
  PoolKind kind = PoolKind::letters;
  std::vector<ObjectLabel> members;

  /// Index of `label` in canonical order, or nullopt when not a member.
  std::optional<int> index_of(const ObjectLabel& label) const;
};

ObjectPool make_pool(PoolKind kind);

struct Condition {
  std::string provider_id;
  std::string model;
  double temperature = 0.0;
  int list_length = 5;
  PoolKind pool_kind = PoolKind::letters;
  Pipeline pipeline = Pipeline::two_step;
  int select_count = 3;
  int trials = 1000;
  std::uint64_t seed = 0;
  // When false the sampled subset is presented in canonical pool order.
  bool shuffle_order = true;

  /// Throws DomainError when 3 <= n_s <= n_t <= 26 or trials >= 1 fails.
  void validate() const;

  /// Stable identifier over the identity fields. Trial budget and seed are
  /// excluded so they can change without renaming the store file.
  std::string id() const;
};

Json to_json(const Condition& condition);
Condition condition_from_json(const Json& j);

struct InputEntry {
  ObjectLabel object;
  int position = 0;  // 1-based

  friend bool operator==(const InputEntry&, const InputEntry&) = default;
};

struct InputList {
  std::vector<InputEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::vector<ObjectLabel> labels() const;

  /// Builds positions 1..n from labels in presentation order.
  static InputList from_labels(std::span<const ObjectLabel> labels);

  friend bool operator==(const InputList&, const InputList&) = default;
};

/// Checks positions 1..n, distinct objects, all drawn from `pool`.
bool is_valid_input(const InputList& input, const ObjectPool& pool);

struct SelectionRow {
  ObjectLabel object;
  std::optional<int> input_position;  // nullopt for labels absent from the input
  int output_position = 0;            // 1-based

  friend bool operator==(const SelectionRow&, const SelectionRow&) = default;
};

struct SelectionMatrix {
  std::vector<SelectionRow> rows;
  bool has_duplicates = false;

  friend bool operator==(const SelectionMatrix&, const SelectionMatrix&) = default;
};

struct TrialFlags {
  bool parsed = false;
  bool primacy = false;
  bool correspondence = false;
  bool correct_count = false;

  /// parsed=false implies all false; primacy implies the other two.
  bool consistent() const noexcept;

  friend bool operator==(const TrialFlags&, const TrialFlags&) = default;
};

struct TrialRecord {
  std::string condition_id;
  std::int64_t trial_index = 0;
  InputList input;
  std::string raw_step1;
  std::optional<std::string> raw_step2;
  std::optional<SelectionMatrix> selection;
  TrialFlags flags;
  // Set when the provider failed; such records do not count toward N.
  std::optional<std::string> error;
  std::optional<std::string> started_at;
  std::optional<std::string> finished_at;

  bool is_error() const noexcept { return error.has_value(); }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

Json to_json(const TrialRecord& record);
TrialRecord trial_from_json(const Json& j);

/// One JSONL line (no trailing newline).
std::string to_jsonl(const TrialRecord& record);

// ---------------------------------------------------------------------------
// Seeding and random helpers. Draws are written out here rather than taken from
// <random> distributions so stores are byte-identical across standard
// libraries.

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t trial_seed(std::uint64_t master, std::string_view condition_id,
                         std::int64_t trial_index);

/// Uniform integer in [0, bound).
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);
/// Uniform double in [0, 1).
double uniform_unit(Rng& rng);

InputList sample_input_list(const ObjectPool& pool, int list_length, Rng& rng,
                            bool shuffle_order = true);

std::string hex64(std::uint64_t value);

}  // namespace selbias
