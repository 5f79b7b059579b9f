#include "selbias/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <thread>

#include "selbias/extraction.hpp"

namespace selbias {

namespace {

bool looks_like_letters(const InputList& input) {
  return !input.entries.empty() && !input.entries.front().object.empty() &&
         std::isalpha(static_cast<unsigned char>(input.entries.front().object.text()[0]));
}

// A label from the same pool kind that is neither in the input nor already
// picked. With the whole pool presented it falls back to a label outside it.
ObjectLabel outside_label(const InputList& input, const std::vector<ObjectLabel>& picks,
                          Rng& rng) {
  const PoolKind kind = looks_like_letters(input) ? PoolKind::letters : PoolKind::numbers;
  std::set<ObjectLabel> taken(picks.begin(), picks.end());
  for (const auto& e : input.entries) taken.insert(e.object);
  std::vector<ObjectLabel> candidates;
  for (const auto& m : make_pool(kind).members) {
    if (!taken.count(m)) candidates.push_back(m);
  }
  if (candidates.empty()) {
    return ObjectLabel(kind == PoolKind::letters ? "AA" : std::to_string(kPoolSize + 1));
  }
  return candidates[uniform_index(rng, candidates.size())];
}

// One weighted draw among `remaining` (indices into input); nullopt when every
// remaining weight is zero.
std::optional<std::size_t> weighted_draw(const std::vector<std::size_t>& remaining,
                                         const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (auto i : remaining) total += weights[i];
  if (total <= 0.0) return std::nullopt;
  const double u = uniform_unit(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < remaining.size(); ++k) {
    const double w = weights[remaining[k]];
    if (w <= 0.0) continue;
    acc += w;
    last_positive = k;
    if (u < acc) return k;
  }
  return last_positive;  // rounding at the top end
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string simulate_response(const BiasModel& model, const InputList& input, int select_count,
                              Pipeline pipeline, Rng& rng) {
  const auto n = input.entries.size();
  if (select_count < 0 || static_cast<std::size_t>(select_count) > n) {
    throw DomainError("simulate_response: select_count exceeds list length");
  }

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = model.position_weight(input.entries[i].position) *
                 model.identity_weight(input.entries[i].object.text());
  }
  std::vector<std::size_t> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = i;

  std::vector<ObjectLabel> picks;
  if (uniform_unit(rng) < model.effective_primacy(pipeline)) {
    for (int i = 0; i < select_count; ++i) picks.push_back(input.entries[i].object);
    remaining.erase(remaining.begin(), remaining.begin() + select_count);
  } else {
    for (int i = 0; i < select_count; ++i) {
      const auto k = weighted_draw(remaining, weights, rng);
      if (!k) break;  // only zero-weight objects left
      picks.push_back(input.entries[remaining[*k]].object);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(*k));
    }
  }

  if (uniform_unit(rng) < model.hallucination_rate && !picks.empty()) {
    const auto slot = uniform_index(rng, picks.size());
    picks[slot] = outside_label(input, picks, rng);
  }

  if (uniform_unit(rng) < model.effective_miscount(pipeline)) {
    const bool add = uniform_unit(rng) < 0.5;
    std::optional<std::size_t> extra;
    if (add) extra = weighted_draw(remaining, weights, rng);
    if (extra) {
      picks.push_back(input.entries[remaining[*extra]].object);
    } else if (picks.size() > 1) {
      picks.pop_back();
    }
  }

  return render_choices_json(picks);
}

std::optional<SimulatedCall> classify_request(const ProviderRequest& request) {
  const std::string_view text = request.user_text;
  SimulatedCall call;

  if (const auto fence = text.find("+++\n"); fence != std::string_view::npos) {
    const auto begin = fence + 4;
    const auto end = text.find("\n+++", begin);
    if (end == std::string_view::npos) return std::nullopt;
    call.kind = SimulatedCall::Kind::extraction_step;
    call.enclosed = std::string(text.substr(begin, end - begin));
    return call;
  }

  static constexpr std::string_view kLead = "Please select ";
  static constexpr std::string_view kTail = " of the following:";
  const auto lead = text.find(kLead);
  if (lead == std::string_view::npos) return std::nullopt;
  auto pos = lead + kLead.size();
  const auto tail = text.find(kTail, pos);
  if (tail == std::string_view::npos) return std::nullopt;
  const auto count_text = text.substr(pos, tail - pos);
  if (count_text.empty() || count_text.size() > 3 ||
      !std::all_of(count_text.begin(), count_text.end(),
                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return std::nullopt;
  }
  call.select_count = std::stoi(std::string(count_text));
  pos = tail + kTail.size();

  std::vector<ObjectLabel> labels;
  while (text.substr(pos, 3) == "\n- ") {
    const auto start = pos + 3;
    auto stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    labels.emplace_back(std::string(text.substr(start, stop - start)));
    pos = stop;
  }
  if (labels.empty()) return std::nullopt;
  call.input = InputList::from_labels(labels);
  call.kind = trim(text.substr(pos)).empty() ? SimulatedCall::Kind::sample_step
                                             : SimulatedCall::Kind::direct;
  return call;
}

SimulatedProvider::SimulatedProvider(std::string id, std::string model, BiasModel bias,
                                     std::chrono::milliseconds latency)
    : id_(std::move(id)), model_(std::move(model)), bias_(std::move(bias)), latency_(latency) {
  bias_.validate();
}

ProviderResponse SimulatedProvider::complete(const ProviderRequest& request) {
  calls_.fetch_add(1);
  if (request.user_text.empty()) {
    throw ProviderError(ProviderErrorKind::rejected, "empty user text");
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  const auto call = classify_request(request);
  ProviderResponse response;
  response.latency = latency_;
  if (!call) {
    response.text = "I am not sure which items you would like me to choose from.";
    return response;
  }

  const std::uint64_t base = request.seed ? *request.seed : fnv1a64(request.user_text);
  Rng rng(mix_seed(base, static_cast<std::uint64_t>(call->kind)));
  switch (call->kind) {
    case SimulatedCall::Kind::sample_step:
    case SimulatedCall::Kind::direct: {
      const auto pipeline =
          call->kind == SimulatedCall::Kind::direct ? Pipeline::direct : Pipeline::two_step;
      const int count = std::min<int>(call->select_count, static_cast<int>(call->input.size()));
      response.text = simulate_response(bias_, call->input, count, pipeline, rng);
      break;
    }
    case SimulatedCall::Kind::extraction_step: {
      const auto parsed = extract_choices(call->enclosed);
      if (parsed.ok()) {
        std::vector<ObjectLabel> labels;
        for (const auto& l : parsed.labels()) labels.emplace_back(l);
        response.text = render_choices_json(labels);
      } else {
        response.text = call->enclosed;
      }
      break;
    }
  }
  return response;
}

}  // namespace selbias
