#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <thread>

#include "selbias/extraction.hpp"
#include "selbias/prompting.hpp"
#include "selbias/simulator.hpp"
#include "support.hpp"

using namespace selbias;

namespace {

std::vector<std::string> simulate(const BiasModel& model, const InputList& input, int n_s,
                                  Pipeline pipeline, Rng& rng) {
  const auto parsed = extract_choices(simulate_response(model, input, n_s, pipeline, rng));
  REQUIRE(parsed.ok());
  return parsed.labels();
}

}  // namespace

TEST_CASE("primacy rate 1 always returns the first n_s objects") {
  BiasModel model;
  model.primacy_rate = 1.0;
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto input = sample_input_list(pool, 10, rng);
    const auto out = simulate(model, input, 3, Pipeline::two_step, rng);
    REQUIRE(out.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK(out[k] == input.entries[k].object.text());
  }
}

TEST_CASE("simulate_response is deterministic under a fixed seed") {
  BiasModel model;
  model.hallucination_rate = 0.3;
  model.miscount_rate = 0.3;
  const auto input = testing::input_of({"A", "B", "C", "D", "E", "F"});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    CHECK(simulate_response(model, input, 3, Pipeline::direct, a) ==
          simulate_response(model, input, 3, Pipeline::direct, b));
  }
}

TEST_CASE("uniform model returns n_s distinct input objects") {
  const BiasModel model;
  const auto pool = make_pool(PoolKind::numbers);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto input = sample_input_list(pool, 5, rng);
    const auto out = simulate(model, input, 3, Pipeline::two_step, rng);
    const auto flags = compute_flags(resolve_selection(out, input), 3);
    CHECK(flags.correspondence);
    CHECK(flags.correct_count);
  }
}

TEST_CASE("zero identity weight excludes an object") {
  BiasModel model;
  model.identity_weights["Q"] = 0.0;
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(3);
  int q_present = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto input = sample_input_list(pool, 5, rng);
    for (const auto& e : input.entries) q_present += e.object.text() == "Q";
    for (const auto& label : simulate(model, input, 3, Pipeline::two_step, rng)) CHECK(label != "Q");
  }
  CHECK(q_present > 100);
}

TEST_CASE("only zero-weight objects left shortens the answer") {
  BiasModel model;
  for (const char* l : {"B", "C", "D"}) model.identity_weights[l] = 0.0;
  Rng rng(4);
  const auto out = simulate(model, testing::input_of({"A", "B", "C", "D"}), 3, Pipeline::two_step, rng);
  CHECK(out == std::vector<std::string>{"A"});
}

TEST_CASE("position weights skew selections toward heavy positions") {
  BiasModel model;
  model.position_weights[1] = 20.0;
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(5);
  int first = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const auto input = sample_input_list(pool, 10, rng);
    const auto out = simulate(model, input, 3, Pipeline::two_step, rng);
    first += std::count(out.begin(), out.end(), input.entries[0].object.text());
  }
  CHECK(first > 0.95 * n);
}

TEST_CASE("hallucination rate 1 always swaps in an outside label") {
  BiasModel model;
  model.hallucination_rate = 1.0;
  Rng rng(6);
  const auto pool = make_pool(PoolKind::letters);
  for (int i = 0; i < 200; ++i) {
    const auto input = sample_input_list(pool, 5, rng);
    const auto out = simulate(model, input, 3, Pipeline::two_step, rng);
    const auto m = resolve_selection(out, input);
    CHECK(out.size() == 3);
    CHECK_FALSE(compute_flags(m, 3).correspondence);
    CHECK_FALSE(m.has_duplicates);
  }
  Rng full(7);
  const auto whole = sample_input_list(pool, 26, full);
  const auto out = simulate(model, whole, 3, Pipeline::two_step, full);
  CHECK(std::count(out.begin(), out.end(), "AA") == 1);
}

TEST_CASE("miscount rate 1 perturbs the count by one") {
  BiasModel model;
  model.miscount_rate = 1.0;
  Rng rng(8);
  const auto pool = make_pool(PoolKind::numbers);
  std::set<std::size_t> sizes;
  for (int i = 0; i < 300; ++i) {
    const auto out = simulate(model, sample_input_list(pool, 8, rng), 3, Pipeline::two_step, rng);
    CHECK((out.size() == 2 || out.size() == 4));
    sizes.insert(out.size());
  }
  CHECK(sizes.size() == 2);
}

TEST_CASE("direct load multiplier scales primacy and miscount") {
  BiasModel model;
  model.primacy_rate = 0.1;
  model.miscount_rate = 0.4;
  model.direct_load_multiplier = 3.0;
  CHECK(model.effective_primacy(Pipeline::two_step) == doctest::Approx(0.1));
  CHECK(model.effective_primacy(Pipeline::direct) == doctest::Approx(0.3));
  CHECK(model.effective_miscount(Pipeline::direct) == 1.0);
  CHECK(model.effective_primacy(Pipeline::direct) >= model.effective_primacy(Pipeline::two_step));
  model.direct_load_multiplier = 0.0;
  CHECK(model.effective_primacy(Pipeline::direct) == 0.0);
}

TEST_CASE("equal identity weights give a relabeling-invariant object marginal") {
  // Identity weights all equal to 2: object frequencies must stay uniform.
  BiasModel model;
  for (const auto& m : make_pool(PoolKind::letters).members) model.identity_weights[m.text()] = 2.0;
  model.position_weights[1] = 3.0;
  const auto pool = make_pool(PoolKind::letters);
  Rng rng(9);
  std::map<std::string, int> selected;
  const int trials = 13000;
  for (int i = 0; i < trials; ++i) {
    for (const auto& l : simulate(model, sample_input_list(pool, 5, rng), 3, Pipeline::two_step, rng)) {
      ++selected[l];
    }
  }
  const double expected = trials * 3.0 / 26.0;
  double chi2 = 0.0;
  for (const auto& m : pool.members) {
    const double o = selected[m.text()];
    chi2 += (o - expected) * (o - expected) / expected;
  }
  // Each trial picks 3 distinct objects; E[Pearson] = 26 - 3 here, rescaled to 25 df.
  CHECK(chi2 * 25.0 / 23.0 < 52.6197);
}

TEST_CASE("bias model JSON parsing and validation") {
  const auto m = bias_model_from_json(Json::parse(R"({
    "primacy_rate": 0.2, "position_weights": [2, 1, 0.5],
    "identity_weights": {"A": 3}, "hallucination_rate": 0.01,
    "miscount_rate": 0.02, "direct_load_multiplier": 2})"));
  CHECK(m.primacy_rate == 0.2);
  CHECK(m.position_weight(1) == 2.0);
  CHECK(m.position_weight(3) == 0.5);
  CHECK(m.position_weight(4) == 1.0);
  CHECK(m.identity_weight("A") == 3.0);
  CHECK(bias_model_from_json(to_json(m)).position_weights == m.position_weights);

  const auto alt = bias_model_from_json(Json::parse(R"({"position_weights": {"2": 4}})"));
  CHECK(alt.position_weight(2) == 4.0);

  auto error_of = [](const char* text) -> std::string {
    try {
      bias_model_from_json(Json::parse(text));
    } catch (const std::invalid_argument& e) {
      return e.what();
    }
    return "";
  };
  CHECK(error_of(R"({"primacy_rate": 1.5})").rfind("primacy_rate", 0) == 0);
  CHECK(error_of(R"({"position_weights": {"3": -1}})").rfind("position_weights[3]", 0) == 0);
  CHECK(error_of(R"({"identity_weights": {"B": "x"}})").find("identity_weights") != std::string::npos);
  CHECK(error_of(R"({"primacy": 0.1})").find("primacy") != std::string::npos);
  CHECK(error_of(R"({"direct_load_multiplier": -1})").rfind("direct_load_multiplier", 0) == 0);
  CHECK(error_of("[1]") != "");
}

TEST_CASE("classify_request recognizes every harness prompt") {
  const auto labels = testing::labels({"B", "Q", "E", "A", "K"});
  const auto prompt = construct_prompt(labels, 3);

  ProviderRequest sample;
  sample.user_text = prompt.text;
  auto call = classify_request(sample);
  REQUIRE(call);
  CHECK(call->kind == SimulatedCall::Kind::sample_step);
  CHECK(call->select_count == 3);
  CHECK(call->input.labels() == labels);

  ProviderRequest direct;
  const auto messages = render_rail_messages(build_direct_rail(prompt, labels, 3));
  direct.system_text = messages.system_text;
  direct.user_text = messages.user_text;
  call = classify_request(direct);
  REQUIRE(call);
  CHECK(call->kind == SimulatedCall::Kind::direct);
  CHECK(call->input.labels() == labels);

  ProviderRequest extraction;
  extraction.user_text = render_rail_messages(build_two_step_rail("I pick B, Q")).user_text;
  call = classify_request(extraction);
  REQUIRE(call);
  CHECK(call->kind == SimulatedCall::Kind::extraction_step);
  CHECK(call->enclosed == "I pick B, Q");

  ProviderRequest other;
  other.user_text = "Hello there";
  CHECK_FALSE(classify_request(other));
}

TEST_CASE("simulated provider answers deterministically and counts calls") {
  auto provider = testing::sim_provider();
  ProviderRequest r;
  r.user_text = construct_prompt(testing::labels({"A", "B", "C", "D", "E"}), 3).text;
  r.seed = 77;
  const auto first = provider->complete(r).text;
  CHECK(provider->complete(r).text == first);
  CHECK(provider->call_count() == 2);
  CHECK(provider->deterministic());

  ProviderRequest extraction;
  extraction.user_text = render_rail_messages(build_two_step_rail(first)).user_text;
  extraction.seed = 78;
  CHECK(provider->complete(extraction).text == first);

  ProviderRequest junk;
  junk.user_text = "???";
  CHECK(extract_choices(provider->complete(junk).text).failure() == ParseFailure::not_json);

  ProviderRequest empty;
  CHECK_THROWS_AS(provider->complete(empty), ProviderError);
}

TEST_CASE("simulated provider is safe under concurrent use") {
  auto provider = testing::sim_provider();
  const auto text = construct_prompt(testing::labels({"A", "B", "C", "D", "E"}), 3).text;
  std::vector<std::string> expected(64);
  for (int i = 0; i < 64; ++i) {
    ProviderRequest r;
    r.user_text = text;
    r.seed = static_cast<std::uint64_t>(i);
    expected[i] = provider->complete(r).text;
  }
  std::vector<std::string> got(64);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (int i = t; i < 64; i += 8) {
          ProviderRequest r;
          r.user_text = text;
          r.seed = static_cast<std::uint64_t>(i);
          got[i] = provider->complete(r).text;
        }
      });
    }
  }
  CHECK(got == expected);
  CHECK(provider->call_count() == 128);
}
