#include "selbias/runner.hpp"

#include <algorithm>
#include <condition_variable>
#include <ctime>
#include <mutex>
#include <set>
#include <thread>

#include "selbias/prompting.hpp"
#include "selbias/store.hpp"

namespace selbias {

namespace fs = std::filesystem;

void ConditionGrid::validate() const {
  if (providers.empty()) throw ValidationError("grid.providers: empty");
  if (temperatures.empty()) throw ValidationError("grid.temperatures: empty");
  if (list_lengths.empty()) throw ValidationError("grid.list_lengths: empty");
  if (pool_kinds.empty()) throw ValidationError("grid.pool_kinds: empty");
  if (pipelines.empty()) throw ValidationError("grid.pipelines: empty");
  if (trials < 1) throw ValidationError("grid.trials: must be >= 1");
  if (select_count < 3) throw ValidationError("grid.select_count: must be >= 3");
  for (std::size_t i = 0; i < list_lengths.size(); ++i) {
    const int n = list_lengths[i];
    if (n < select_count || n > kPoolSize) {
      throw ValidationError("grid.list_lengths[" + std::to_string(i) + "]: " + std::to_string(n) +
                            " outside [select_count, 26]");
    }
  }
}

Json to_json(const ConditionGrid& grid) {
  Json pools = Json::array();
  for (auto k : grid.pool_kinds) pools.push_back(to_string(k));
  Json pipelines = Json::array();
  for (auto p : grid.pipelines) pipelines.push_back(to_string(p));
  return Json{{"providers", grid.providers},
              {"temperatures", grid.temperatures},
              {"list_lengths", grid.list_lengths},
              {"pool_kinds", pools},
              {"pipelines", pipelines},
              {"select_count", grid.select_count},
              {"trials", grid.trials},
              {"master_seed", grid.master_seed},
              {"shuffle_order", grid.shuffle_order}};
}

namespace {

template <typename T>
std::vector<T> list_field(const Json& j, const char* name) {
  const std::string path = std::string("grid.") + name;
  if (!j.contains(name)) throw ValidationError(path + ": missing");
  const auto& value = j.at(name);
  if (!value.is_array()) throw ValidationError(path + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    try {
      out.push_back(value[i].get<T>());
    } catch (const Json::exception&) {
      throw ValidationError(path + "[" + std::to_string(i) + "]: wrong type");
    }
  }
  return out;
}

}  // namespace

ConditionGrid grid_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("grid: expected an object");
  ConditionGrid grid;
  grid.providers = list_field<std::string>(j, "providers");
  grid.temperatures = list_field<double>(j, "temperatures");
  grid.list_lengths = list_field<int>(j, "list_lengths");
  const auto pools = list_field<std::string>(j, "pool_kinds");
  for (std::size_t i = 0; i < pools.size(); ++i) {
    try {
      grid.pool_kinds.push_back(parse_pool_kind(pools[i]));
    } catch (const DomainError& e) {
      throw ValidationError("grid.pool_kinds[" + std::to_string(i) + "]: " + e.what());
    }
  }
  const auto pipelines = list_field<std::string>(j, "pipelines");
  for (std::size_t i = 0; i < pipelines.size(); ++i) {
    try {
      grid.pipelines.push_back(parse_pipeline(pipelines[i]));
    } catch (const DomainError& e) {
      throw ValidationError("grid.pipelines[" + std::to_string(i) + "]: " + e.what());
    }
  }
  try {
    grid.select_count = j.value("select_count", 3);
    grid.trials = j.value("trials", 1000);
    grid.master_seed = j.value("master_seed", std::uint64_t{0});
    grid.shuffle_order = j.value("shuffle_order", true);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("grid: ") + e.what());
  }
  return grid;
}

std::vector<Condition> expand_grid(const ConditionGrid& grid, const ProviderMap& providers) {
  grid.validate();
  std::vector<Condition> out;
  for (const auto& provider_id : grid.providers) {
    const auto it = providers.find(provider_id);
    if (it == providers.end()) throw ValidationError("unknown provider id '" + provider_id + "'");
    for (double temperature : grid.temperatures) {
      for (int n : grid.list_lengths) {
        for (auto pool : grid.pool_kinds) {
          for (auto pipeline : grid.pipelines) {
            Condition c;
            c.provider_id = provider_id;
            c.model = it->second->model();
            c.temperature = temperature;
            c.list_length = n;
            c.pool_kind = pool;
            c.pipeline = pipeline;
            c.select_count = grid.select_count;
            c.trials = grid.trials;
            c.seed = grid.master_seed;
            c.shuffle_order = grid.shuffle_order;
            c.validate();
            out.push_back(std::move(c));
          }
        }
      }
    }
  }
  return out;
}

std::string_view to_string(ConditionStatus status) {
  switch (status) {
    case ConditionStatus::pending: return "pending";
    case ConditionStatus::complete: return "complete";
    case ConditionStatus::partial: return "partial";
    case ConditionStatus::failed: return "failed";
  }
  return "unknown";
}

ConditionStatus parse_condition_status(std::string_view text) {
  if (text == "pending") return ConditionStatus::pending;
  if (text == "complete") return ConditionStatus::complete;
  if (text == "partial") return ConditionStatus::partial;
  if (text == "failed") return ConditionStatus::failed;
  throw std::invalid_argument("unknown condition status '" + std::string(text) + "'");
}

std::int64_t RunManifest::total_target() const {
  std::int64_t total = 0;
  for (const auto& c : conditions) total += c.summary.target;
  return total;
}

bool RunManifest::complete() const {
  return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) {
    return c.summary.status == ConditionStatus::complete;
  });
}

namespace {

Json summary_json(const ConditionSummary& s) {
  Json j{{"target", s.target},
         {"completed", s.completed},
         {"errors", s.errors},
         {"parsed", s.parsed},
         {"primacy", s.primacy},
         {"correspondence", s.correspondence},
         {"correct_count", s.correct_count},
         {"status", to_string(s.status)},
         {"provider_exhausted", s.provider_exhausted}};
  if (s.failure) j["failure"] = *s.failure;
  return j;
}

ConditionSummary summary_from_json(const Json& j, const std::string& id) {
  ConditionSummary s;
  s.condition_id = id;
  s.target = j.at("target").get<int>();
  s.completed = j.at("completed").get<int>();
  s.errors = j.at("errors").get<int>();
  s.parsed = j.at("parsed").get<int>();
  s.primacy = j.at("primacy").get<int>();
  s.correspondence = j.at("correspondence").get<int>();
  s.correct_count = j.at("correct_count").get<int>();
  s.status = parse_condition_status(j.at("status").get<std::string>());
  s.provider_exhausted = j.value("provider_exhausted", false);
  if (j.contains("failure")) s.failure = j["failure"].get<std::string>();
  return s;
}

}  // namespace

Json to_json(const RunManifest& m) {
  Json conditions = Json::array();
  for (const auto& c : m.conditions) {
    conditions.push_back(Json{{"condition_id", c.condition_id},
                              {"condition", to_json(c.condition)},
                              {"file", c.file},
                              {"summary", summary_json(c.summary)}});
  }
  return Json{{"grid_hash", m.grid_hash},
              {"grid", m.grid},
              {"extract_mode", m.extract_mode == ExtractMode::strict ? "strict" : "lenient"},
              {"conditions", std::move(conditions)}};
}

RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  m.grid_hash = j.at("grid_hash").get<std::string>();
  m.grid = j.at("grid");
  m.extract_mode = j.value("extract_mode", "lenient") == "strict" ? ExtractMode::strict
                                                                   : ExtractMode::lenient;
  for (const auto& c : j.at("conditions")) {
    ManifestEntry e;
    e.condition_id = c.at("condition_id").get<std::string>();
    e.condition = condition_from_json(c.at("condition"));
    e.file = c.at("file").get<std::string>();
    e.summary = summary_from_json(c.at("summary"), e.condition_id);
    m.conditions.push_back(std::move(e));
  }
  return m;
}

std::optional<RunManifest> load_manifest(const fs::path& run_dir) {
  const auto path = run_dir / kManifestFile;
  if (!fs::exists(path)) return std::nullopt;
  Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw StoreError(path.string() + " is not valid JSON");
  try {
    return manifest_from_json(j);
  } catch (const std::exception& e) {
    throw StoreError(path.string() + ": " + e.what());
  }
}

void save_manifest(const fs::path& run_dir, const RunManifest& manifest) {
  write_file_atomic(run_dir / kManifestFile, to_json(manifest).dump(2) + "\n");
}

int calls_per_trial(Pipeline pipeline) { return pipeline == Pipeline::direct ? 1 : 2; }

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", &tm);
  char millis[8];
  std::snprintf(millis, sizeof millis, ".%03dZ", static_cast<int>(ms));
  return std::string(stamp) + millis;
}

ProviderRequest make_request(const Condition& c, const Provider& provider,
                             std::uint64_t seed) {
  ProviderRequest r;
  r.model = c.model;
  r.temperature = c.temperature;
  r.max_tokens = provider.max_tokens();
  r.seed = seed;
  return r;
}

}  // namespace

TrialRecord run_trial(const Condition& condition, std::int64_t trial_index, Provider& provider,
                      ExtractMode mode) {
  TrialRecord record;
  record.condition_id = condition.id();
  record.trial_index = trial_index;
  const bool stamp = !provider.deterministic();
  if (stamp) record.started_at = utc_now();

  const std::uint64_t seed = trial_seed(condition.seed, record.condition_id, trial_index);
  Rng rng(seed);
  record.input = sample_input_list(make_pool(condition.pool_kind), condition.list_length, rng,
                                   condition.shuffle_order);
  const auto labels = record.input.labels();
  const auto prompt = construct_prompt(labels, condition.select_count);

  std::optional<std::string> extract_from;
  try {
    if (condition.pipeline == Pipeline::two_step) {
      auto first = make_request(condition, provider, mix_seed(seed, 1));
      first.user_text = prompt.text;
      record.raw_step1 = provider.complete(first).text;
      if (!record.raw_step1.empty()) {
        const auto rail = build_two_step_rail(record.raw_step1);
        const auto messages =
            render_rail_messages(rail, RailExpansions::defaults(), provider.instruction_placement());
        auto second = make_request(condition, provider, mix_seed(seed, 2));
        second.system_text = messages.system_text;
        second.user_text = messages.user_text;
        record.raw_step2 = provider.complete(second).text;
        extract_from = record.raw_step2;
      }
    } else {
      const auto rail = build_direct_rail(prompt, labels, condition.select_count);
      const auto messages =
          render_rail_messages(rail, RailExpansions::defaults(), provider.instruction_placement());
      auto request = make_request(condition, provider, mix_seed(seed, 1));
      request.system_text = messages.system_text;
      request.user_text = messages.user_text;
      record.raw_step1 = provider.complete(request).text;
      extract_from = record.raw_step1;
    }
  } catch (const ProviderError& e) {
    record.error = std::string(to_string(e.kind())) + ": " + e.what();
    if (stamp) record.finished_at = utc_now();
    return record;
  }

  if (extract_from) {
    const auto parsed = extract_choices(*extract_from, mode);
    if (parsed.ok()) record.selection = resolve_selection(parsed.labels(), record.input);
  }
  record.flags = compute_flags(record.selection, condition.select_count);
  if (stamp) record.finished_at = utc_now();
  return record;
}

ConditionSummary summarize(const std::vector<TrialRecord>& records, const Condition& condition) {
  ConditionSummary s;
  s.condition_id = condition.id();
  s.target = condition.trials;
  for (const auto& r : records) {
    if (r.is_error()) {
      ++s.errors;
      continue;
    }
    ++s.completed;
    s.parsed += r.flags.parsed;
    s.primacy += r.flags.primacy;
    s.correspondence += r.flags.correspondence;
    s.correct_count += r.flags.correct_count;
  }
  s.status = s.completed >= s.target ? ConditionStatus::complete
             : s.completed > 0       ? ConditionStatus::partial
                                     : ConditionStatus::pending;
  return s;
}

namespace {

// Hands out trial indices to workers and writes finished records in index
// order, so the file is always a contiguous prefix of the dispatched indices.
class ConditionScheduler {
 public:
  ConditionScheduler(std::int64_t first_index, int needed, std::optional<int> limit,
                     int max_consecutive_errors, TrialWriter& writer)
      : next_index_(first_index),
        next_to_write_(first_index),
        needed_(needed),
        limit_(limit),
        max_consecutive_errors_(max_consecutive_errors),
        writer_(writer) {}

  std::optional<std::int64_t> next() {
    std::lock_guard lock(mutex_);
    if (stopped_) return std::nullopt;
    if (successes_ + inflight_ >= needed_) return std::nullopt;
    if (limit_ && successes_ + inflight_ >= *limit_) return std::nullopt;
    ++inflight_;
    return next_index_++;
  }

  void finish(TrialRecord record) {
    std::lock_guard lock(mutex_);
    --inflight_;
    ++executed_;
    if (record.is_error()) {
      ++consecutive_errors_;
      if (record.error->rfind("auth_failure", 0) == 0) {
        stop_locked("provider authentication failed: " + *record.error, true);
      } else if (consecutive_errors_ >= max_consecutive_errors_) {
        stop_locked(std::to_string(consecutive_errors_) +
                        " consecutive provider errors; last: " + *record.error,
                    true);
      }
    } else {
      ++successes_;
      consecutive_errors_ = 0;
    }
    pending_.emplace(record.trial_index, std::move(record));
    if (storage_failed_) return;
    try {
      while (!pending_.empty() && pending_.begin()->first == next_to_write_) {
        writer_.append(pending_.begin()->second);
        pending_.erase(pending_.begin());
        ++next_to_write_;
      }
    } catch (const StoreError& e) {
      storage_failed_ = true;
      storage_error_ = e.what();
      stop_locked(std::string("storage failure: ") + e.what(), false);
    }
  }

  int executed() const { return executed_; }
  bool stopped() const { return stopped_; }
  bool provider_exhausted() const { return provider_exhausted_; }
  const std::optional<std::string>& reason() const { return reason_; }
  const std::optional<std::string>& storage_error() const { return storage_error_; }

 private:
  void stop_locked(std::string reason, bool provider) {
    if (!stopped_) {
      stopped_ = true;
      reason_ = std::move(reason);
      provider_exhausted_ = provider;
    }
  }

  std::mutex mutex_;
  std::int64_t next_index_;
  std::int64_t next_to_write_;
  int needed_;
  std::optional<int> limit_;
  int max_consecutive_errors_;
  TrialWriter& writer_;
  int successes_ = 0;
  int inflight_ = 0;
  int executed_ = 0;
  int consecutive_errors_ = 0;
  bool stopped_ = false;
  bool provider_exhausted_ = false;
  bool storage_failed_ = false;
  std::optional<std::string> reason_;
  std::optional<std::string> storage_error_;
  std::map<std::int64_t, TrialRecord> pending_;
};

}  // namespace

ConditionSummary run_condition(const Condition& condition, Provider& provider,
                               const fs::path& file, const RunOptions& options) {
  condition.validate();
  const std::string id = condition.id();

  auto existing = load_trials(file);
  std::int64_t next_index = 0;
  int done = 0;
  for (const auto& r : existing.records) {
    if (r.condition_id != id) {
      throw StoreError(file.string() + " holds records of condition " + r.condition_id);
    }
    next_index = std::max(next_index, r.trial_index + 1);
    if (!r.is_error()) ++done;
  }

  const int needed = std::max(0, condition.trials - done);
  std::optional<std::string> reason;
  std::optional<std::string> storage_error;
  bool exhausted = false;
  int executed = 0;
  bool stopped = false;

  if (needed > 0) {
    TrialWriter writer(file);
    ConditionScheduler scheduler(next_index, needed, options.trial_limit,
                                 std::max(1, options.max_consecutive_errors), writer);
    auto work = [&] {
      while (auto index = scheduler.next()) {
        scheduler.finish(run_trial(condition, *index, provider, options.extract_mode));
      }
    };
    const int workers = std::max(1, std::min(options.parallelism, needed));
    if (workers == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    }
    executed = scheduler.executed();
    stopped = scheduler.stopped();
    reason = scheduler.reason();
    storage_error = scheduler.storage_error();
    exhausted = scheduler.provider_exhausted();
  }

  if (storage_error) throw StoreError(*storage_error);

  auto summary = summarize(load_trials(file).records, condition);
  summary.executed_now = executed;
  if (stopped && summary.status != ConditionStatus::complete) {
    summary.status = exhausted ? ConditionStatus::failed : ConditionStatus::partial;
    summary.failure = reason;
    summary.provider_exhausted = exhausted;
  }
  return summary;
}

namespace {

std::string grid_hash(const std::vector<Condition>& conditions, const ConditionGrid& grid,
                      ExtractMode mode) {
  Json canonical{{"grid", to_json(grid)},
                 {"extract_mode", mode == ExtractMode::strict ? "strict" : "lenient"}};
  Json ids = Json::array();
  for (const auto& c : conditions) ids.push_back(c.id());
  canonical["conditions"] = std::move(ids);
  return hex64(fnv1a64(canonical.dump()));
}

}  // namespace

RunManifest plan_grid(const ConditionGrid& grid, const ProviderMap& providers, ExtractMode mode) {
  const auto conditions = expand_grid(grid, providers);
  RunManifest manifest;
  manifest.grid = to_json(grid);
  manifest.extract_mode = mode;
  manifest.grid_hash = grid_hash(conditions, grid, mode);
  std::set<std::string> seen;
  for (const auto& c : conditions) {
    ManifestEntry e;
    e.condition = c;
    e.condition_id = c.id();
    if (!seen.insert(e.condition_id).second) {
      throw ValidationError("grid expands to duplicate condition " + e.condition_id);
    }
    e.file = e.condition_id + ".jsonl";
    e.summary.condition_id = e.condition_id;
    e.summary.target = c.trials;
    manifest.conditions.push_back(std::move(e));
  }
  return manifest;
}

RunManifest run_grid(const ConditionGrid& grid, const ProviderMap& providers,
                     const fs::path& run_dir, const RunOptions& options) {
  RunManifest manifest = plan_grid(grid, providers, options.extract_mode);
  if (auto previous = load_manifest(run_dir)) {
    if (previous->grid_hash != manifest.grid_hash) {
      throw ValidationError("manifest grid hash " + previous->grid_hash +
                            " does not match this grid (" + manifest.grid_hash +
                            "); refusing to resume into " + run_dir.string());
    }
    for (std::size_t i = 0; i < manifest.conditions.size(); ++i) {
      manifest.conditions[i].summary = previous->conditions[i].summary;
    }
  }
  fs::create_directories(run_dir);
  save_manifest(run_dir, manifest);

  for (auto& entry : manifest.conditions) {
    auto& provider = *providers.at(entry.condition.provider_id);
    try {
      entry.summary = run_condition(entry.condition, provider, run_dir / entry.file, options);
    } catch (const std::exception& e) {
      auto loaded = load_trials(run_dir / entry.file);
      entry.summary = summarize(loaded.records, entry.condition);
      if (entry.summary.status != ConditionStatus::complete) {
        entry.summary.status = ConditionStatus::failed;
      }
      entry.summary.failure = e.what();
    }
    save_manifest(run_dir, manifest);
    if (options.on_condition_done) options.on_condition_done(entry.summary);
  }
  return manifest;
}

}  // namespace selbias
