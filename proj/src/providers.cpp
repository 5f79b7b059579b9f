#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include "selbias/providers.hpp"
#include "selbias/simulator.hpp"

namespace selbias {

std::string_view to_string(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::auth_failure: return "auth_failure";
    case ProviderErrorKind::exhausted_retries: return "exhausted_retries";
    case ProviderErrorKind::malformed_response: return "malformed_response";
    case ProviderErrorKind::rejected: return "rejected";
  }
  return "unknown";
}

std::string_view to_string(Adapter adapter) {
  switch (adapter) {
    case Adapter::openai: return "openai";
    case Adapter::anthropic: return "anthropic";
    case Adapter::simulator: return "simulator";
  }
  return "unknown";
}

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_per_second_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      last_(Clock::now()) {}

void RateLimiter::acquire() {
  if (rate_per_second_ <= 0.0) return;
  double deficit = 0.0;
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_second_);
    // Reserve a token; a negative balance queues later callers behind us.
    tokens_ -= 1.0;
    deficit = -tokens_;
  }
  if (deficit > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(deficit / rate_per_second_));
  }
}

namespace {

template <typename T>
T field(const Json& j, const char* name, const std::string& id) {
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception&) {
    throw std::invalid_argument("providers[" + id + "]." + name + ": missing or wrong type");
  }
}

}  // namespace

ProviderConfig provider_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw std::invalid_argument("provider config: expected an object");
  ProviderConfig c;
  c.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
  if (c.id.empty()) throw std::invalid_argument("providers[].id: missing or empty");

  const auto adapter = field<std::string>(j, "adapter", c.id);
  if (adapter == "openai") {
    c.adapter = Adapter::openai;
  } else if (adapter == "anthropic") {
    c.adapter = Adapter::anthropic;
  } else if (adapter == "simulator") {
    c.adapter = Adapter::simulator;
  } else {
    throw std::invalid_argument("providers[" + c.id + "].adapter: unknown adapter '" + adapter + "'");
  }

  c.model = j.contains("model") ? field<std::string>(j, "model", c.id)
                                : (c.adapter == Adapter::simulator ? "simulated" : "");
  if (c.model.empty()) throw std::invalid_argument("providers[" + c.id + "].model: missing");
  c.base_url = j.value("base_url", "");
  if (c.adapter != Adapter::simulator && c.base_url.empty()) {
    throw std::invalid_argument("providers[" + c.id + "].base_url: missing");
  }
  c.credential_env = j.value("credential_env", "");
  c.rpm_limit = j.value("rpm_limit", 0.0);
  c.retry.max_attempts = j.value("max_attempts", 5);
  if (c.retry.max_attempts < 1) {
    throw std::invalid_argument("providers[" + c.id + "].max_attempts: must be >= 1");
  }
  c.retry.base_backoff = std::chrono::milliseconds(j.value("backoff_ms", 500));
  c.retry.max_backoff = std::chrono::milliseconds(j.value("max_backoff_ms", 30000));
  c.retry.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
  c.max_tokens = j.value("max_tokens", 256);
  c.forward_seed = j.value("forward_seed", false);
  const auto placement = j.value("instructions", std::string("system"));
  if (placement == "system") {
    c.placement = InstructionPlacement::system;
  } else if (placement == "prepend") {
    c.placement = InstructionPlacement::prepend;
  } else {
    throw std::invalid_argument("providers[" + c.id + "].instructions: expected system|prepend");
  }

  if (c.adapter == Adapter::simulator) {
    c.simulated_latency = std::chrono::milliseconds(j.value("latency_ms", 0));
    if (!j.contains("bias_model")) {
      c.bias_model = Json::object();
    } else if (j["bias_model"].is_string()) {
      auto path = std::filesystem::path(j["bias_model"].get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      std::ifstream in(path);
      if (!in) {
        throw std::invalid_argument("providers[" + c.id + "].bias_model: cannot read " +
                                    path.string());
      }
      c.bias_model = Json::parse(in, nullptr, false);
      if (c.bias_model.is_discarded()) {
        throw std::invalid_argument("providers[" + c.id + "].bias_model: " + path.string() +
                                    " is not valid JSON");
      }
    } else {
      c.bias_model = j["bias_model"];
    }
    try {
      bias_model_from_json(c.bias_model);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("providers[" + c.id + "].bias_model." + e.what());
    }
  }
  return c;
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  if (config.adapter == Adapter::simulator) {
    return std::make_shared<SimulatedProvider>(config.id, config.model,
                                               bias_model_from_json(config.bias_model),
                                               config.simulated_latency);
  }
  return std::make_shared<HttpProvider>(config);
}

}  // namespace selbias
