#include "selbias/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "selbias/config.hpp"
#include "selbias/report.hpp"
#include "selbias/simulator.hpp"
#include "selbias/store.hpp"

namespace selbias::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double value, const char* format) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

void print_manifest(const RunManifest& manifest, std::ostream& out) {
  std::int64_t done = 0;
  for (const auto& e : manifest.conditions) {
    const auto& s = e.summary;
    done += s.completed;
    out << e.condition_id << "  " << e.condition.provider_id << "  T="
        << format_number(e.condition.temperature) << "  n_t=" << e.condition.list_length << "  "
        << to_string(e.condition.pool_kind) << "  " << to_string(e.condition.pipeline) << "  "
        << s.completed << '/' << s.target << "  " << to_string(s.status);
    if (s.errors > 0) out << "  errors=" << s.errors;
    if (s.failure) out << "  (" << *s.failure << ')';
    out << '\n';
  }
  out << "trials: " << done << '/' << manifest.total_target() << '\n';
}

int exit_status(const RunManifest& manifest) {
  const bool exhausted = std::any_of(manifest.conditions.begin(), manifest.conditions.end(),
                                     [](const ManifestEntry& e) { return e.summary.provider_exhausted; });
  if (exhausted) return provider_exhausted;
  return manifest.complete() ? ok : partial;
}

int execute_grid(const ConditionGrid& grid, const ProviderMap& providers, const fs::path& store,
                 const RunOptions& base, std::ostream& out, std::ostream& err) {
  RunOptions options = base;
  options.on_condition_done = [&err](const ConditionSummary& s) {
    err << "condition " << s.condition_id << ": " << s.completed << '/' << s.target << ' '
        << to_string(s.status) << '\n';
  };
  const auto manifest = run_grid(grid, providers, store, options);
  print_manifest(manifest, out);
  return exit_status(manifest);
}

struct RunArgs {
  std::string config;
  std::string store;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  bool strict_json = false;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  auto config = load_run_config(args.config);
  if (!args.store.empty()) config.store = args.store;
  if (args.seed) config.grid.master_seed = *args.seed;
  if (args.parallelism) config.parallelism = *args.parallelism;
  if (args.strict_json) config.strict_json = true;
  config.validate();

  RunOptions options;
  options.parallelism = config.parallelism;
  options.extract_mode = config.strict_json ? ExtractMode::strict : ExtractMode::lenient;
  options.max_consecutive_errors = config.max_consecutive_errors;
  return execute_grid(config.grid, build_providers(config.providers), config.store, options, out,
                      err);
}

struct SimulateArgs {
  std::string model;
  std::string store;
  std::vector<double> temperatures{0.0};
  std::vector<int> lengths{5};
  std::vector<std::string> pools{"letters"};
  std::vector<std::string> pipelines{"two_step", "direct"};
  int select = 3;
  int trials = 1000;
  std::uint64_t seed = 0;
  int parallelism = 1;
  int latency_ms = 0;
  bool ordered = false;
  bool strict_json = false;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  std::string text;
  try {
    text = read_file(args.model);
  } catch (const StoreError& e) {
    throw ValidationError(e.what());
  }
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError(args.model + ": invalid JSON");
  BiasModel bias;
  try {
    bias = bias_model_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(args.model + ": " + e.what());
  }

  const std::string name = fs::path(args.model).stem().string();
  const std::string id = "sim-" + name;
  ProviderMap providers;
  providers.emplace(id, std::make_shared<SimulatedProvider>(
                            id, name, bias, std::chrono::milliseconds(args.latency_ms)));

  ConditionGrid grid;
  grid.providers = {id};
  grid.temperatures = args.temperatures;
  grid.list_lengths = args.lengths;
  try {
    for (const auto& p : args.pools) grid.pool_kinds.push_back(parse_pool_kind(p));
    for (const auto& p : args.pipelines) grid.pipelines.push_back(parse_pipeline(p));
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  grid.select_count = args.select;
  grid.trials = args.trials;
  grid.master_seed = args.seed;
  grid.shuffle_order = !args.ordered;

  RunOptions options;
  options.parallelism = args.parallelism;
  options.extract_mode = args.strict_json ? ExtractMode::strict : ExtractMode::lenient;
  if (options.parallelism < 1) throw ValidationError("--parallelism: must be >= 1");
  return execute_grid(grid, providers, args.store, options, out, err);
}

struct AnalyzeArgs {
  std::string store;
  std::string out_dir;
  int bootstrap = 3000;
  std::uint64_t seed = 0;
  bool miller_madow = false;
};

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  if (args.bootstrap < 1) throw ValidationError("--bootstrap: must be >= 1");
  AnalyzeOptions options;
  options.bootstrap.replicates = args.bootstrap;
  options.bootstrap.seed = args.seed;
  options.mi.miller_madow = args.miller_madow;

  const auto bundles = analyze_run(args.store, options);
  const fs::path out_dir = args.out_dir.empty() ? fs::path(args.store) / "report" : fs::path(args.out_dir);
  auto written = emit_tables(bundles, out_dir);
  const auto plots = emit_plot_data(bundles, out_dir);
  written.insert(written.end(), plots.begin(), plots.end());
  const auto comparison = compare_pipelines(bundles);
  written.push_back(emit_comparison(comparison, out_dir));
  for (const auto& notice : comparison.notices) err << "note: " << notice << '\n';
  for (const auto& b : bundles) {
    if (b.partial) err << "note: condition " << b.condition_id << " is partial (" << b.trials << '/'
                       << b.condition.trials << " trials)\n";
  }
  for (const auto& path : written) out << path.string() << '\n';
  return ok;
}

int cmd_baselines(const std::vector<int>& lengths, int select, std::ostream& out) {
  out << "n_t  per_position  primacy_p  primacy_pct  1/primacy_p\n";
  for (int n : lengths) {
    const auto b = uniform_baselines(n, select);
    out << n << "  " << format_number(b.per_position_p) << "  " << format_number(b.primacy_p)
        << "  " << fixed(100.0 * b.primacy_p, "%.4g") << "%  " << b.primacy_denominator << '\n';
  }
  return ok;
}

}  // namespace

int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selection-bias audit harness for list-selection prompts", "selbias"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a configured condition grid (resumes existing stores)");
  run->add_option("--config", run_args.config, "Run configuration JSON")->required();
  run->add_option("--store", run_args.store, "Override the configured store directory");
  run->add_option("--seed", run_args.seed, "Override grid.master_seed");
  run->add_option("--parallelism", run_args.parallelism, "Max in-flight provider calls");
  run->add_flag("--strict-json", run_args.strict_json, "Whole-output JSON parsing only");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a grid against a simulated provider");
  simulate->add_option("--model", sim_args.model, "Bias model JSON")->required();
  simulate->add_option("--store", sim_args.store, "Store directory")->required();
  simulate->add_option("--temperatures", sim_args.temperatures)->delimiter(',');
  simulate->add_option("--lengths", sim_args.lengths)->delimiter(',');
  simulate->add_option("--pools", sim_args.pools, "letters,numbers")->delimiter(',');
  simulate->add_option("--pipelines", sim_args.pipelines, "two_step,direct")->delimiter(',');
  simulate->add_option("--select", sim_args.select, "n_s");
  simulate->add_option("--trials", sim_args.trials, "N per condition");
  simulate->add_option("--seed", sim_args.seed);
  simulate->add_option("--parallelism", sim_args.parallelism);
  simulate->add_option("--latency-ms", sim_args.latency_ms, "Simulated per-call latency");
  simulate->add_flag("--ordered", sim_args.ordered, "Present lists in pool order");
  simulate->add_flag("--strict-json", sim_args.strict_json);

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Compute metrics and write tables and plot data");
  analyze->add_option("--store", analyze_args.store, "Store directory")->required();
  analyze->add_option("--out", analyze_args.out_dir, "Output directory (default <store>/report)");
  analyze->add_option("--bootstrap", analyze_args.bootstrap, "Bootstrap replicates");
  analyze->add_option("--seed", analyze_args.seed, "Bootstrap seed");
  analyze->add_flag("--miller-madow", analyze_args.miller_madow, "Bias-corrected MI");

  std::vector<int> lengths{5, 10, 15, 20, 26};
  int select = 3;
  auto* baselines = app.add_subcommand("baselines", "Uniform-chance baselines per list length");
  baselines->add_option("--lengths", lengths)->delimiter(',');
  baselines->add_option("--select", select, "n_s");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*run) return cmd_run(run_args, out, err);
    if (*simulate) return cmd_simulate(sim_args, out, err);
    if (*analyze) return cmd_analyze(analyze_args, out, err);
    return cmd_baselines(lengths, select, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  }
}

}  // namespace selbias::cli
