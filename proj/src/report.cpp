#include "selbias/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "selbias/store.hpp"

namespace selbias {

namespace fs = std::filesystem;

MetricsBundle analyze_condition(const Condition& condition, std::span<const TrialRecord> records,
                                const AnalyzeOptions& options) {
  MetricsBundle b;
  b.condition = condition;
  b.condition_id = condition.id();
  for (const auto& r : records) b.error_records += r.is_error();

  const TrialCorpus corpus(records, condition.pool_kind);
  if (corpus.empty()) {
    throw ReportError("condition " + b.condition_id + " has no usable trial records");
  }
  b.trials = corpus.size();
  b.partial = static_cast<int>(corpus.size()) < condition.trials;

  BootstrapConfig bootstrap = options.bootstrap;
  bootstrap.seed = mix_seed(options.bootstrap.seed, fnv1a64(b.condition_id));

  b.headline = headline_rates(corpus);
  b.headline_se = bootstrap_se(
      corpus,
      [](const TrialCorpus& c, Sample s) {
        const auto h = headline_rates(c, s);
        return std::vector<double>{h.primacy, h.correspondence, h.correct_count};
      },
      bootstrap);

  b.positions = position_probability(corpus, condition.list_length);
  attach_position_se(b.positions, corpus, condition.list_length, bootstrap);
  b.objects = object_probability(corpus);
  attach_object_se(b.objects, corpus, bootstrap);

  b.joint = joint_probability(corpus);
  if (b.joint.total_selected() > 0) b.mi = mutual_information(b.joint, options.mi);
  b.baselines = uniform_baselines(condition.list_length, condition.select_count);
  return b;
}

std::vector<MetricsBundle> analyze_run(const fs::path& run_dir, const AnalyzeOptions& options) {
  std::optional<RunManifest> manifest;
  try {
    manifest = load_manifest(run_dir);
  } catch (const StoreError& e) {
    throw ReportError(e.what());
  }
  if (!manifest) throw ReportError("no manifest.json in " + run_dir.string());

  const auto& entries = manifest->conditions;
  auto analyze_entry = [&](const ManifestEntry& entry) {
    const auto path = run_dir / entry.file;
    if (!fs::exists(path)) throw ReportError("missing condition file " + path.string());
    auto loaded = load_trials(path);
    if (loaded.total_lines > 0 &&
        static_cast<double>(loaded.corrupt_lines) >
            options.max_corrupt_fraction * static_cast<double>(loaded.total_lines)) {
      throw ReportError(path.string() + ": " + std::to_string(loaded.corrupt_lines) + " of " +
                        std::to_string(loaded.total_lines) + " lines are corrupt");
    }
    // Over-complete files are cut back to N trials.
    std::vector<TrialRecord> records;
    int kept = 0;
    for (auto& r : loaded.records) {
      if (r.condition_id != entry.condition_id) continue;
      if (!r.is_error()) {
        if (kept == entry.condition.trials) continue;
        ++kept;
      }
      records.push_back(std::move(r));
    }
    auto bundle = analyze_condition(entry.condition, records, options);
    bundle.corrupt_lines = loaded.corrupt_lines;
    return bundle;
  };

  std::vector<std::optional<MetricsBundle>> results(entries.size());
  std::vector<std::exception_ptr> failures(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        results[i] = analyze_entry(entries[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(
      options.parallelism > 0 ? static_cast<std::size_t>(options.parallelism)
                              : std::max(1u, std::thread::hardware_concurrency()),
      1, std::max<std::size_t>(1, entries.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<MetricsBundle> bundles;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (failures[i]) std::rethrow_exception(failures[i]);
    if (results[i]->corrupt_lines > 0) {
      std::fprintf(stderr, "warning: %s: skipped %zu corrupt line(s)\n",
                   (run_dir / entries[i].file).string().c_str(), results[i]->corrupt_lines);
    }
    bundles.push_back(std::move(*results[i]));
  }
  return bundles;
}

PipelineDelta compare_pair(const MetricsBundle& two_step, const MetricsBundle& direct) {
  PipelineDelta d;
  d.two_step_condition_id = two_step.condition_id;
  d.direct_condition_id = direct.condition_id;
  d.provider_id = two_step.condition.provider_id;
  d.model = two_step.condition.model;
  d.temperature = two_step.condition.temperature;
  d.list_length = two_step.condition.list_length;
  d.pool_kind = two_step.condition.pool_kind;
  d.two_step_primacy = two_step.headline.primacy;
  d.direct_primacy = direct.headline.primacy;
  if (direct.headline.primacy > 0.0) {
    d.primacy_reduction_pct =
        100.0 * (direct.headline.primacy - two_step.headline.primacy) / direct.headline.primacy;
  }
  d.correct_count_delta = direct.headline.correct_count - two_step.headline.correct_count;
  d.mi_delta = (two_step.mi && direct.mi) ? direct.mi->total_nats - two_step.mi->total_nats
                                          : std::nan("");
  return d;
}

PipelineComparison compare_pipelines(const std::vector<MetricsBundle>& bundles) {
  using Key = std::tuple<std::string, std::string, double, int, int, int, bool>;
  auto key_of = [](const Condition& c) {
    return Key{c.provider_id,  c.model, c.temperature, c.list_length, static_cast<int>(c.pool_kind),
               c.select_count, c.shuffle_order};
  };
  std::map<Key, const MetricsBundle*> two_step, direct;
  std::vector<Key> order;
  for (const auto& b : bundles) {
    const auto key = key_of(b.condition);
    auto& side = b.condition.pipeline == Pipeline::two_step ? two_step : direct;
    if (!two_step.count(key) && !direct.count(key)) order.push_back(key);
    side[key] = &b;
  }

  PipelineComparison result;
  for (const auto& key : order) {
    const auto t = two_step.find(key);
    const auto d = direct.find(key);
    if (t != two_step.end() && d != direct.end()) {
      result.deltas.push_back(compare_pair(*t->second, *d->second));
    } else {
      const auto* only = t != two_step.end() ? t->second : d->second;
      result.notices.push_back("condition " + only->condition_id + " (" +
                               std::string(to_string(only->condition.pipeline)) +
                               ") has no counterpart pipeline; skipped");
    }
  }
  return result;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  std::string out = buf;
  if (out == "-0") out = "0";
  return out;
}

namespace {

// Six significant digits as a JSON number.
Json rounded(double value) {
  if (!std::isfinite(value)) return nullptr;
  return std::stod(format_number(value));
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw ReportError("write to " + path.string() + " failed");
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ReportError("cannot create output directory " + dir.string());
}

void write_estimate_rows(std::ostream& out, const MetricsBundle& b,
                         const std::vector<ProbabilityEstimate>& estimates, double baseline) {
  for (const auto& e : estimates) {
    out << e.key << ',';
    if (e.defined()) {
      const auto total = format_number(e.p_total);
      const auto primacy = format_number(e.p_primacy_part);
      const auto rest = format_number(e.p_nonprimacy_part);
      // The rounded parts must still add up to the rounded total.
      const double gap = std::stod(total) - (std::stod(primacy) + std::stod(rest));
      if (std::fabs(gap) > 1e-5 * std::max(1.0, std::stod(total))) {
        throw ReportError("part-sum identity broken for " + b.condition_id + " key " + e.key);
      }
      out << total << ',' << primacy << ',' << rest << ',' << format_number(e.se);
    } else {
      out << ",,,";
    }
    out << ',' << format_number(baseline) << ',' << b.condition_id << ',' << e.n_opportunities
        << ',' << b.status() << '\n';
  }
}

}  // namespace

std::vector<fs::path> emit_tables(const std::vector<MetricsBundle>& bundles, const fs::path& out_dir) {
  if (bundles.empty()) throw ReportError("emit_tables: no bundles");
  prepare_dir(out_dir);
  std::vector<fs::path> written;

  {
    const auto path = out_dir / "headline.csv";
    auto out = open_output(path);
    out << "condition_id,temperature,n_t,pool,pipeline,primacy,correspondence,correct_count,"
           "provider_id,model,trials,primacy_se,correspondence_se,correct_count_se,status\n";
    for (const auto& b : bundles) {
      const auto& c = b.condition;
      out << b.condition_id << ',' << format_number(c.temperature) << ',' << c.list_length << ','
          << to_string(c.pool_kind) << ',' << to_string(c.pipeline) << ','
          << format_number(b.headline.primacy) << ',' << format_number(b.headline.correspondence)
          << ',' << format_number(b.headline.correct_count) << ',' << c.provider_id << ','
          << c.model << ',' << b.trials << ',' << format_number(b.headline_se.at(0)) << ','
          << format_number(b.headline_se.at(1)) << ',' << format_number(b.headline_se.at(2))
          << ',' << b.status() << '\n';
    }
    close_output(out, path);
    written.push_back(path);
  }

  const char* estimate_header =
      "key,p_total,p_primacy_part,p_nonprimacy_part,se,baseline,condition_id,n_opportunities,"
      "status\n";
  {
    const auto path = out_dir / "positions.csv";
    auto out = open_output(path);
    out << estimate_header;
    for (const auto& b : bundles) write_estimate_rows(out, b, b.positions, b.baselines.per_position_p);
    close_output(out, path);
    written.push_back(path);
  }
  {
    const auto path = out_dir / "objects.csv";
    auto out = open_output(path);
    out << estimate_header;
    for (const auto& b : bundles) write_estimate_rows(out, b, b.objects, b.baselines.per_object_p);
    close_output(out, path);
    written.push_back(path);
  }
  {
    const auto path = out_dir / "mi.csv";
    auto out = open_output(path);
    out << "condition_id,key,nats,status\n";
    for (const auto& b : bundles) {
      if (!b.mi) continue;
      out << b.condition_id << ",total," << format_number(b.mi->total_nats) << ',' << b.status()
          << '\n';
      if (b.mi->bias_correction != 0.0) {
        out << b.condition_id << ",miller_madow_correction," << format_number(b.mi->bias_correction)
            << ',' << b.status() << '\n';
      }
      for (const auto& [label, nats] : b.mi->per_object_contribution) {
        out << b.condition_id << ',' << label.text() << ',' << format_number(nats) << ','
            << b.status() << '\n';
      }
    }
    close_output(out, path);
    written.push_back(path);
  }
  return written;
}

namespace {

Json series_header(const MetricsBundle& b) {
  const auto& c = b.condition;
  return Json{{"condition_id", b.condition_id},
              {"provider_id", c.provider_id},
              {"model", c.model},
              {"temperature", rounded(c.temperature)},
              {"n_t", c.list_length},
              {"pool", to_string(c.pool_kind)},
              {"pipeline", to_string(c.pipeline)},
              {"status", b.status()},
              {"trials", b.trials}};
}

Json bars(const std::vector<ProbabilityEstimate>& estimates) {
  Json out = Json::array();
  for (const auto& e : estimates) {
    if (!e.defined()) {
      out.push_back(Json{{"key", e.key}, {"n_opportunities", 0}});
      continue;
    }
    out.push_back(Json{{"key", e.key},
                       {"primacy", rounded(e.p_primacy_part)},
                       {"non_primacy", rounded(e.p_nonprimacy_part)},
                       {"total", rounded(e.p_total)},
                       {"se", rounded(e.se)},
                       {"n_opportunities", e.n_opportunities}});
  }
  return out;
}

void write_json(const fs::path& path, const Json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
  close_output(out, path);
}

}  // namespace

std::vector<fs::path> emit_plot_data(const std::vector<MetricsBundle>& bundles,
                                     const fs::path& out_dir) {
  if (bundles.empty()) throw ReportError("emit_plot_data: no bundles");
  prepare_dir(out_dir);

  Json positions = Json::array();
  Json objects = Json::array();
  Json mi = Json::array();
  for (const auto& b : bundles) {
    Json p = series_header(b);
    p["baseline"] = rounded(b.baselines.per_position_p);
    p["bars"] = bars(b.positions);
    positions.push_back(std::move(p));

    Json o = series_header(b);
    o["baseline"] = rounded(b.baselines.per_object_p);
    o["bars"] = bars(b.objects);
    objects.push_back(std::move(o));

    if (b.mi) {
      Json m = series_header(b);
      m["total_nats"] = rounded(b.mi->total_nats);
      m["bias_correction"] = rounded(b.mi->bias_correction);
      Json contributions = Json::array();
      for (const auto& [label, nats] : b.mi->per_object_contribution) {
        contributions.push_back(Json{{"object", label.text()}, {"nats", rounded(nats)}});
      }
      m["per_object"] = std::move(contributions);
      mi.push_back(std::move(m));
    }
  }

  const std::vector<std::pair<std::string, Json>> docs{
      {"positions_plot.json",
       Json{{"family", "position_selection"}, {"unit", "probability"}, {"series", positions}}},
      {"objects_plot.json",
       Json{{"family", "object_selection"}, {"unit", "probability"}, {"series", objects}}},
      {"mi_plot.json", Json{{"family", "mutual_information"}, {"unit", "nats"}, {"series", mi}}}};
  std::vector<fs::path> written;
  for (const auto& [name, doc] : docs) {
    write_json(out_dir / name, doc);
    written.push_back(out_dir / name);
  }
  return written;
}

fs::path emit_comparison(const PipelineComparison& comparison, const fs::path& out_dir) {
  prepare_dir(out_dir);
  const auto path = out_dir / "pipelines.csv";
  auto out = open_output(path);
  out << "provider_id,model,temperature,n_t,pool,two_step_condition_id,direct_condition_id,"
         "two_step_primacy,direct_primacy,primacy_reduction_pct,correct_count_delta,mi_delta\n";
  for (const auto& d : comparison.deltas) {
    out << d.provider_id << ',' << d.model << ',' << format_number(d.temperature) << ','
        << d.list_length << ',' << to_string(d.pool_kind) << ',' << d.two_step_condition_id << ','
        << d.direct_condition_id << ',' << format_number(d.two_step_primacy) << ','
        << format_number(d.direct_primacy) << ','
        << (d.primacy_reduction_pct ? format_number(*d.primacy_reduction_pct) : "") << ','
        << format_number(d.correct_count_delta) << ',' << format_number(d.mi_delta) << '\n';
  }
  close_output(out, path);
  return path;
}

}  // namespace selbias
