#include "selbias/stats.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace selbias {

TrialCorpus::TrialCorpus(std::span<const TrialRecord> records, PoolKind pool_kind)
    : pool_(make_pool(pool_kind)) {
  bool first = true;
  for (const auto& r : records) {
    if (r.is_error()) continue;
    CompactTrial t;
    t.parsed = r.flags.parsed;
    t.primacy = r.flags.primacy;
    t.correspondence = r.flags.correspondence;
    t.correct_count = r.flags.correct_count;
    t.objects.reserve(r.input.size());
    for (const auto& e : r.input.entries) {
      const auto index = pool_.index_of(e.object);
      if (!index) {
        throw StatsError("trial " + std::to_string(r.trial_index) + ": label '" + e.object.text() +
                         "' is not in the " + std::string(to_string(pool_kind)) + " pool");
      }
      t.objects.push_back(static_cast<std::uint8_t>(*index));
    }
    if (r.selection) {
      for (const auto& row : r.selection->rows) {
        if (row.input_position && *row.input_position >= 1 &&
            *row.input_position <= static_cast<int>(t.objects.size())) {
          t.selected |= 1u << (*row.input_position - 1);
        }
      }
    }
    const int n = static_cast<int>(t.objects.size());
    if (first) {
      list_length_ = n;
      first = false;
    } else if (list_length_ && *list_length_ != n) {
      list_length_.reset();
    }
    trials_.push_back(std::move(t));
  }
}

std::vector<std::uint32_t> TrialCorpus::all() const {
  std::vector<std::uint32_t> out(trials_.size());
  std::iota(out.begin(), out.end(), 0u);
  return out;
}

HeadlineRates headline_rates(const TrialCorpus& corpus, Sample sample) {
  if (sample.empty()) throw StatsError("headline_rates: no trials");
  HeadlineRates rates;
  std::size_t primacy = 0, correspondence = 0, correct = 0;
  for (auto i : sample) {
    const auto& t = corpus[i];
    primacy += t.primacy;
    correspondence += t.correspondence;
    correct += t.correct_count;
  }
  const double n = static_cast<double>(sample.size());
  rates.primacy = primacy / n;
  rates.correspondence = correspondence / n;
  rates.correct_count = correct / n;
  rates.trials = sample.size();
  return rates;
}

HeadlineRates headline_rates(const TrialCorpus& corpus) {
  const auto all = corpus.all();
  return headline_rates(corpus, all);
}

HeadlineRates headline_rates(std::span<const TrialRecord> trials, PoolKind pool_kind) {
  if (trials.empty()) throw StatsError("headline_rates: no trials");
  for (const auto& t : trials) {
    if (t.condition_id != trials.front().condition_id) {
      throw StatsError("headline_rates: trials from more than one condition");
    }
  }
  return headline_rates(TrialCorpus(trials, pool_kind));
}

namespace {

void finish(ProbabilityEstimate& e) {
  if (e.n_opportunities == 0) return;
  const double d = static_cast<double>(e.n_opportunities);
  e.p_primacy_part = e.selected_primacy / d;
  e.p_nonprimacy_part = e.selected_nonprimacy / d;
  e.p_total = e.selected() / d;
}

}  // namespace

std::vector<ProbabilityEstimate> position_probability(const TrialCorpus& corpus, int list_length,
                                                      Sample sample) {
  if (corpus.list_length() && *corpus.list_length() != list_length) {
    throw StatsError("position_probability: trials have list length " +
                     std::to_string(*corpus.list_length()) + ", not " +
                     std::to_string(list_length));
  }
  if (!corpus.empty() && !corpus.list_length()) {
    throw StatsError("position_probability: mixed list lengths");
  }
  std::vector<ProbabilityEstimate> out(list_length);
  for (int p = 0; p < list_length; ++p) out[p].key = std::to_string(p + 1);

  std::int64_t parsed = 0;
  for (auto i : sample) {
    const auto& t = corpus[i];
    if (!t.parsed) continue;
    ++parsed;
    for (int p = 0; p < list_length; ++p) {
      if (t.selected & (1u << p)) {
        (t.primacy ? out[p].selected_primacy : out[p].selected_nonprimacy) += 1;
      }
    }
  }
  for (auto& e : out) {
    e.n_opportunities = parsed;
    finish(e);
  }
  return out;
}

std::vector<ProbabilityEstimate> position_probability(const TrialCorpus& corpus, int list_length) {
  const auto all = corpus.all();
  return position_probability(corpus, list_length, all);
}

std::vector<ProbabilityEstimate> object_probability(const TrialCorpus& corpus, Sample sample) {
  const auto& members = corpus.pool().members;
  std::vector<ProbabilityEstimate> out(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) out[k].key = members[k].text();

  for (auto i : sample) {
    const auto& t = corpus[i];
    if (!t.parsed) continue;
    for (std::size_t p = 0; p < t.objects.size(); ++p) {
      auto& e = out[t.objects[p]];
      ++e.n_opportunities;
      if (t.selected & (1u << p)) (t.primacy ? e.selected_primacy : e.selected_nonprimacy) += 1;
    }
  }
  for (auto& e : out) finish(e);
  return out;
}

std::vector<ProbabilityEstimate> object_probability(const TrialCorpus& corpus) {
  const auto all = corpus.all();
  return object_probability(corpus, all);
}

std::int64_t JointTable::total_selected() const {
  std::int64_t total = 0;
  for (const auto& [key, cell] : cells) total += cell.count_selected;
  return total;
}

void JointTable::refresh() {
  for (auto& [key, cell] : cells) {
    cell.p = cell.count_present > 0
                 ? static_cast<double>(cell.count_selected) / static_cast<double>(cell.count_present)
                 : 0.0;
  }
}

JointTable joint_probability(const TrialCorpus& corpus) {
  JointTable table;
  const auto& members = corpus.pool().members;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& t = corpus[i];
    if (!t.parsed) continue;
    for (std::size_t p = 0; p < t.objects.size(); ++p) {
      auto& cell = table.cells[{members[t.objects[p]], static_cast<int>(p) + 1}];
      ++cell.count_present;
      if (t.selected & (1u << p)) ++cell.count_selected;
    }
  }
  table.refresh();
  return table;
}

MIResult mutual_information(const JointTable& table, const MIOptions& options) {
  const double n = static_cast<double>(table.total_selected());
  if (table.cells.empty() || n <= 0.0) throw StatsError("mutual_information: empty table");

  std::map<ObjectLabel, double> by_object;
  std::map<int, double> by_position;
  std::size_t joint_support = 0;
  for (const auto& [key, cell] : table.cells) {
    if (cell.count_selected == 0) continue;
    by_object[key.first] += static_cast<double>(cell.count_selected);
    by_position[key.second] += static_cast<double>(cell.count_selected);
    ++joint_support;
  }

  MIResult result;
  for (const auto& [key, cell] : table.cells) {
    result.per_object_contribution.try_emplace(key.first, 0.0);
    if (cell.count_selected == 0) continue;  // 0 ln 0 = 0
    const double c = static_cast<double>(cell.count_selected);
    const double term =
        (c / n) * std::log(c * n / (by_object.at(key.first) * by_position.at(key.second)));
    result.per_object_contribution[key.first] += term;
  }
  for (const auto& [label, contribution] : result.per_object_contribution) {
    result.total_nats += contribution;
  }
  if (options.miller_madow) {
    // Entropy corrections (m - 1) / 2n for H(L) + H(P) - H(L, P).
    const double ml = static_cast<double>(by_object.size());
    const double mp = static_cast<double>(by_position.size());
    const double mj = static_cast<double>(joint_support);
    result.bias_correction = ((ml - 1) + (mp - 1) - (mj - 1)) / (2.0 * n);
    result.total_nats += result.bias_correction;
  }
  return result;
}

std::vector<double> bootstrap_se(const TrialCorpus& corpus, const Estimator& estimator,
                                 const BootstrapConfig& config) {
  if (config.replicates < 1) throw StatsError("bootstrap_se: replicates must be >= 1");
  const auto all = corpus.all();
  const std::size_t keys = estimator(corpus, all).size();
  std::vector<double> mean(keys, 0.0), m2(keys, 0.0);
  std::vector<std::int64_t> count(keys, 0);
  std::vector<std::uint32_t> sample(corpus.size());

  for (int r = 0; r < config.replicates; ++r) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(r)));
    for (auto& s : sample) s = static_cast<std::uint32_t>(uniform_index(rng, corpus.size()));
    const auto values = estimator(corpus, sample);
    for (std::size_t k = 0; k < keys; ++k) {
      const double v = values[k];
      if (std::isnan(v)) continue;
      // Welford update
      ++count[k];
      const double delta = v - mean[k];
      mean[k] += delta / static_cast<double>(count[k]);
      m2[k] += delta * (v - mean[k]);
    }
  }

  std::vector<double> se(keys, 0.0);
  for (std::size_t k = 0; k < keys; ++k) {
    if (count[k] > 1) se[k] = std::sqrt(std::max(0.0, m2[k] / static_cast<double>(count[k] - 1)));
  }
  return se;
}

namespace {

std::vector<double> totals(const std::vector<ProbabilityEstimate>& estimates) {
  std::vector<double> out;
  out.reserve(estimates.size());
  for (const auto& e : estimates) {
    out.push_back(e.defined() ? e.p_total : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace

void attach_position_se(std::vector<ProbabilityEstimate>& estimates, const TrialCorpus& corpus,
                        int list_length, const BootstrapConfig& config) {
  if (corpus.empty()) return;
  const auto se = bootstrap_se(
      corpus,
      [list_length](const TrialCorpus& c, Sample s) {
        return totals(position_probability(c, list_length, s));
      },
      config);
  for (std::size_t k = 0; k < estimates.size(); ++k) estimates[k].se = se[k];
}

void attach_object_se(std::vector<ProbabilityEstimate>& estimates, const TrialCorpus& corpus,
                      const BootstrapConfig& config) {
  if (corpus.empty()) return;
  const auto se = bootstrap_se(
      corpus, [](const TrialCorpus& c, Sample s) { return totals(object_probability(c, s)); },
      config);
  for (std::size_t k = 0; k < estimates.size(); ++k) estimates[k].se = se[k];
}

UniformBaselines uniform_baselines(int list_length, int select_count) {
  if (select_count < 1 || select_count > list_length || list_length > kPoolSize) {
    throw StatsError("uniform_baselines: need 1 <= n_s <= n_t <= 26");
  }
  UniformBaselines b;
  b.per_position_p = static_cast<double>(select_count) / list_length;
  b.per_object_p = b.per_position_p;
  // Ordered first-n_s probability: 1 / (n_t (n_t-1) ... (n_t-n_s+1)).
  std::uint64_t denominator = 1;
  double p = 1.0;
  for (int i = 0; i < select_count; ++i) {
    const auto factor = static_cast<std::uint64_t>(list_length - i);
    if (denominator > std::numeric_limits<std::uint64_t>::max() / factor) {
      denominator = 0;  // overflow; only the floating value is meaningful
    } else if (denominator != 0) {
      denominator *= factor;
    }
    p /= static_cast<double>(list_length - i);
  }
  b.primacy_p = denominator != 0 ? 1.0 / static_cast<double>(denominator) : p;
  b.primacy_denominator = denominator;
  return b;
}

}  // namespace selbias
