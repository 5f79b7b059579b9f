#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "selbias/domain.hpp"
#include "support.hpp"

using namespace selbias;

TEST_CASE("make_pool builds the canonical letter and number pools") {
  const auto letters = make_pool(PoolKind::letters);
  REQUIRE(letters.members.size() == 26);
  CHECK(letters.members.front().text() == "A");
  CHECK(letters.members.back().text() == "Z");
  for (int i = 0; i < 26; ++i) {
    CHECK(letters.members[i].text() == std::string(1, static_cast<char>('A' + i)));
  }

  const auto numbers = make_pool(PoolKind::numbers);
  REQUIRE(numbers.members.size() == 26);
  for (int i = 0; i < 26; ++i) CHECK(numbers.members[i].text() == std::to_string(i + 1));

  CHECK(letters.index_of(ObjectLabel("C")) == 2);
  CHECK_FALSE(letters.index_of(ObjectLabel("3")));
  CHECK(numbers.index_of(ObjectLabel("26")) == 25);
}

TEST_CASE("sample_input_list with n_t = 26 is a permutation of the pool") {
  const auto pool = make_pool(PoolKind::letters);
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    Rng rng(seed);
    const auto list = sample_input_list(pool, 26, rng);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      CHECK(list.entries[i].position == static_cast<int>(i) + 1);
      seen.insert(list.entries[i].object.text());
    }
    CHECK(seen.size() == 26);
    CHECK(is_valid_input(list, pool));
  }
}

TEST_CASE("sample_input_list is deterministic under a fixed seed") {
  const auto pool = make_pool(PoolKind::numbers);
  Rng a(42), b(42), c(43);
  const auto la = sample_input_list(pool, 5, a);
  const auto lb = sample_input_list(pool, 5, b);
  const auto lc = sample_input_list(pool, 5, c);
  CHECK(la == lb);
  CHECK_FALSE(la == lc);
}

TEST_CASE("sample_input_list rejects out-of-range lengths") {
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(1);
  CHECK_THROWS_AS(sample_input_list(pool, 0, rng), DomainError);
  CHECK_THROWS_AS(sample_input_list(pool, 27, rng), DomainError);
}

TEST_CASE("object frequencies under subset sampling match n_t / n_p") {
  const auto pool = make_pool(PoolKind::letters);
  const int draws = 10000, n_t = 5;
  std::map<std::string, int> counts;
  Rng rng(2024);
  for (int i = 0; i < draws; ++i) {
    const auto list = sample_input_list(pool, n_t, rng);
    REQUIRE(is_valid_input(list, pool));
    for (const auto& e : list.entries) ++counts[e.object.text()];
  }
  const double p = 5.0 / 26.0;
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1 - p));
  double pearson = 0.0;
  for (const auto& member : pool.members) {
    const double o = counts[member.text()];
    CHECK(std::fabs(o - mean) <= 3 * sd);
    pearson += (o - mean) * (o - mean) / mean;
  }
  // Without-replacement counts have E[Pearson] = n_p - n_t rather than
  // n_p - 1; rescaling restores the chi-square(25) reference.
  const double statistic = pearson * 25.0 / 21.0;
  CHECK(statistic < 52.6197);  // chi-square(25) upper 0.001 quantile
}

TEST_CASE("presentation order is a uniform permutation when shuffled") {
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(7);
  // For sampled subsets, the alphabetically smallest element should sit at
  // each position with probability 1/5.
  std::vector<int> at(5, 0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto list = sample_input_list(pool, 5, rng);
    const auto it = std::min_element(list.entries.begin(), list.entries.end(),
                                     [](const auto& a, const auto& b) { return a.object < b.object; });
    ++at[it->position - 1];
  }
  const double sd = std::sqrt(draws * 0.2 * 0.8);
  for (int c : at) CHECK(std::fabs(c - draws * 0.2) <= 4 * sd);
}

TEST_CASE("unshuffled lists keep pool order") {
  const auto pool = make_pool(PoolKind::numbers);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto list = sample_input_list(pool, 10, rng, false);
    for (std::size_t k = 1; k < list.size(); ++k) {
      CHECK(*pool.index_of(list.entries[k - 1].object) < *pool.index_of(list.entries[k].object));
    }
  }
}

TEST_CASE("Condition validation") {
  auto c = testing::sim_condition();
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.select_count = 2;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.list_length = 27;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.list_length = 3;
  bad.select_count = 4;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.provider_id.clear();
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("condition ids are stable and ignore the trial budget and seed") {
  auto a = testing::sim_condition();
  auto b = a;
  b.trials = 999;
  b.seed = 12345;
  CHECK(a.id() == b.id());
  b.temperature = 0.5;
  CHECK(a.id() != b.id());
  b = a;
  b.pipeline = Pipeline::direct;
  CHECK(a.id() != b.id());
  CHECK(a.id().size() == 17);
  CHECK(a.id()[0] == 'c');

  const auto round = condition_from_json(to_json(a));
  CHECK(round.id() == a.id());
  CHECK(round.trials == a.trials);
  CHECK(round.seed == a.seed);
}

TEST_CASE("TrialRecord serializes with the documented field names") {
  TrialRecord r;
  r.condition_id = "cabc";
  r.trial_index = 4;
  r.input = testing::input_of({"A", "D", "Q"});
  r.raw_step1 = "first";
  r.raw_step2 = "{\"choices\": [\"D\"]}";
  SelectionMatrix s;
  s.rows.push_back({ObjectLabel("D"), 2, 1});
  s.rows.push_back({ObjectLabel("Z"), std::nullopt, 2});
  r.selection = s;
  r.flags = {true, false, false, false};

  const Json j = to_json(r);
  for (const char* key : {"condition_id", "trial_index", "input", "raw_step1", "raw_step2",
                          "selection", "flags"}) {
    CHECK(j.contains(key));
  }
  CHECK_FALSE(j.contains("error"));
  CHECK(j["input"] == Json::array({"A", "D", "Q"}));
  CHECK(j["selection"][0] == Json{{"object", "D"}, {"input_position", 2}, {"output_position", 1}});
  CHECK(j["selection"][1]["input_position"].is_null());
  CHECK(j["flags"] == Json{{"parsed", true}, {"primacy", false}, {"correspondence", false},
                           {"correct_count", false}});

  const auto line = to_jsonl(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(trial_from_json(Json::parse(line)) == r);

  TrialRecord direct = r;
  direct.raw_step2.reset();
  direct.selection.reset();
  direct.flags = {};
  const Json dj = to_json(direct);
  CHECK(dj["raw_step2"].is_null());
  CHECK(dj["selection"].is_null());
  CHECK(trial_from_json(dj) == direct);
}

TEST_CASE("TrialFlags implication chain") {
  CHECK(TrialFlags{}.consistent());
  CHECK(TrialFlags{true, true, true, true}.consistent());
  CHECK(TrialFlags{true, false, true, false}.consistent());
  CHECK_FALSE(TrialFlags{false, false, true, false}.consistent());
  CHECK_FALSE(TrialFlags{true, true, false, true}.consistent());
  CHECK_FALSE(TrialFlags{true, true, true, false}.consistent());
}

TEST_CASE("per-trial seeds depend on every input") {
  const auto s = trial_seed(1, "cX", 0);
  CHECK(s == trial_seed(1, "cX", 0));
  CHECK(s != trial_seed(2, "cX", 0));
  CHECK(s != trial_seed(1, "cY", 0));
  CHECK(s != trial_seed(1, "cX", 1));
}

TEST_CASE("uniform_index stays in range and covers it evenly") {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = uniform_index(rng, 7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform_unit(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("is_valid_input rejects malformed lists") {
  const auto pool = make_pool(PoolKind::letters);
  CHECK(is_valid_input(testing::input_of({"A", "B"}), pool));
  CHECK_FALSE(is_valid_input(testing::input_of({"A", "A"}), pool));
  CHECK_FALSE(is_valid_input(testing::input_of({"A", "7"}), pool));
  auto list = testing::input_of({"A", "B"});
  list.entries[1].position = 3;
  CHECK_FALSE(is_valid_input(list, pool));
}
