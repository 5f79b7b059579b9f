#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>

#include "selbias/domain.hpp"
#include "selbias/providers.hpp"

namespace selbias {

/// Parametric selector used as a stand-in LLM with known, injectable biases.
///
/// A response is the first n_s objects in order with probability
/// min(1, primacy_rate * load) where load is direct_load_multiplier under the
/// direct pipeline and 1 otherwise. Otherwise n_s objects are drawn one at a
/// time without replacement, each draw proportional to
/// position_weight(p) * identity_weight(label). Afterwards one object is
/// swapped for an outside label with probability hallucination_rate, and the
/// count is perturbed by one with probability min(1, miscount_rate * load).
struct BiasModel {
  double primacy_rate = 0.0;
  std::map<int, double> position_weights;          // missing positions weigh 1
  std::map<std::string, double> identity_weights;  // missing labels weigh 1
  double hallucination_rate = 0.0;
  double miscount_rate = 0.0;
  double direct_load_multiplier = 1.0;

  double position_weight(int position) const;
  double identity_weight(const std::string& label) const;
  double effective_primacy(Pipeline pipeline) const;
  double effective_miscount(Pipeline pipeline) const;

  /// Throws std::invalid_argument with a field path such as
  /// "position_weights[3]" on bad input.
  void validate() const;

  static BiasModel uniform() { return {}; }
};

BiasModel bias_model_from_json(const Json& j);
Json to_json(const BiasModel& model);

std::string simulate_response(const BiasModel& model, const InputList& input, int select_count,
                              Pipeline pipeline, Rng& rng);

/// What the simulator reads back out of a request it receives.
struct SimulatedCall {
  enum class Kind { sample_step, extraction_step, direct } kind = Kind::sample_step;
  InputList input;
  int select_count = 0;
  std::string enclosed;  // extraction step only: the text between +++ fences
};

/// nullopt when the request does not look like any harness prompt.
std::optional<SimulatedCall> classify_request(const ProviderRequest& request);

/// Answers harness prompts by parsing them and calling simulate_response.
/// The extraction step echoes the choices found in the fenced response.
class SimulatedProvider final : public Provider {
 public:
  SimulatedProvider(std::string id, std::string model, BiasModel bias,
                    std::chrono::milliseconds latency = std::chrono::milliseconds{0});

  ProviderResponse complete(const ProviderRequest& request) override;

  const std::string& id() const override { return id_; }
  const std::string& model() const override { return model_; }
  bool deterministic() const override { return true; }

  const BiasModel& bias() const noexcept { return bias_; }
  std::int64_t call_count() const noexcept { return calls_.load(); }

 private:
  std::string id_;
  std::string model_;
  BiasModel bias_;
  std::chrono::milliseconds latency_;
  std::atomic<std::int64_t> calls_{0};
};

}  // namespace selbias
