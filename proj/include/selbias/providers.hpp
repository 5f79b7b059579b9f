#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "selbias/domain.hpp"
#include "selbias/prompting.hpp"

namespace selbias {

struct ProviderRequest {
  std::string model;
  double temperature = 0.0;
  std::optional<std::string> system_text;
  std::string user_text;
  int max_tokens = 256;
  // Per-trial seed. Hosted adapters only forward it when configured to; the
  // simulator always uses it.
  std::optional<std::uint64_t> seed;
};

struct ProviderResponse {
  std::string text;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
};

enum class ProviderErrorKind {
  auth_failure,       // credential missing or rejected; never retried
  exhausted_retries,  // transient failures outlasted the attempt budget
  malformed_response, // a 2xx body without the expected text field
  rejected,           // other non-retryable 4xx, body kept verbatim
};

std::string_view to_string(ProviderErrorKind kind);

class ProviderError : public std::runtime_error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what, int attempts = 1)
      : std::runtime_error(what), kind_(kind), attempts_(attempts) {}

  ProviderErrorKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }

 private:
  ProviderErrorKind kind_;
  int attempts_;
};

/// A chat-completion endpoint. Implementations are safe to call from many
/// threads at once.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual ProviderResponse complete(const ProviderRequest& request) = 0;

  virtual const std::string& id() const = 0;
  virtual const std::string& model() const = 0;
  virtual InstructionPlacement instruction_placement() const { return InstructionPlacement::system; }
  virtual int max_tokens() const { return 256; }
  /// True when equal requests always produce equal responses.
  virtual bool deterministic() const { return false; }
};

/// Token bucket refilled continuously at rpm/60 tokens per second.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  /// rpm <= 0 disables limiting.
  explicit RateLimiter(double requests_per_minute, double burst = 1.0);

  void acquire();

 private:
  double rate_per_second_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  std::chrono::milliseconds timeout{60000};
};

enum class Adapter { openai, anthropic, simulator };

std::string_view to_string(Adapter adapter);

/// {id, adapter, base_url, model, credential_env, rpm_limit, max_attempts}
/// plus optional tuning fields documented in the README.
struct ProviderConfig {
  std::string id;
  Adapter adapter = Adapter::openai;
  std::string base_url;
  std::string model;
  std::string credential_env;
  double rpm_limit = 0;
  RetryPolicy retry;
  int max_tokens = 256;
  InstructionPlacement placement = InstructionPlacement::system;
  bool forward_seed = false;
  // simulator only
  Json bias_model;
  std::chrono::milliseconds simulated_latency{0};
};

/// Throws std::invalid_argument naming the offending field.
ProviderConfig provider_config_from_json(const Json& j,
                                         const std::filesystem::path& base_dir = {});

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

/// HTTP provider over an OpenAI- or Anthropic-style messages endpoint.
class HttpProvider final : public Provider {
 public:
  /// `sleep` is injectable so tests can skip real backoff waits.
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  explicit HttpProvider(ProviderConfig config, SleepFn sleep = {});
  ~HttpProvider() override;

  ProviderResponse complete(const ProviderRequest& request) override;

  const std::string& id() const override { return config_.id; }
  const std::string& model() const override { return config_.model; }
  InstructionPlacement instruction_placement() const override { return config_.placement; }
  int max_tokens() const override { return config_.max_tokens; }

  /// Wire body for a request, exposed for tests.
  Json request_body(const ProviderRequest& request) const;
  std::string extract_text(const Json& body) const;

 private:
  struct Endpoint;

  ProviderConfig config_;
  SleepFn sleep_;
  RateLimiter limiter_;
  std::unique_ptr<Endpoint> endpoint_;
};

}  // namespace selbias
