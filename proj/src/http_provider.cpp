#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "selbias/providers.hpp"

namespace selbias {

struct HttpProvider::Endpoint {
  std::string scheme_host_port;
  std::string path;
};

namespace {

HttpProvider::SleepFn default_sleep() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

bool is_transient(int status) { return status == 408 || status == 429 || status >= 500; }

std::string truncate_body(const std::string& body) {
  constexpr std::size_t kLimit = 2000;
  return body.size() <= kLimit ? body : body.substr(0, kLimit) + "...";
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config, SleepFn sleep)
    : config_(std::move(config)),
      sleep_(sleep ? std::move(sleep) : default_sleep()),
      limiter_(config_.rpm_limit),
      endpoint_(std::make_unique<Endpoint>()) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("base_url: missing scheme in '" + config_.base_url + "'");
  }
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  endpoint_->scheme_host_port = config_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  endpoint_->path = prefix + (config_.adapter == Adapter::anthropic ? "/messages" : "/chat/completions");
}

HttpProvider::~HttpProvider() = default;

Json HttpProvider::request_body(const ProviderRequest& request) const {
  Json body{{"model", request.model.empty() ? config_.model : request.model},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (config_.adapter == Adapter::anthropic) {
    if (request.system_text) body["system"] = *request.system_text;
    body["messages"] = Json::array({{{"role", "user"}, {"content", request.user_text}}});
  } else {
    Json messages = Json::array();
    if (request.system_text) {
      messages.push_back({{"role", "system"}, {"content", *request.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    body["messages"] = std::move(messages);
    if (config_.forward_seed && request.seed) body["seed"] = *request.seed;
  }
  return body;
}

std::string HttpProvider::extract_text(const Json& body) const {
  if (config_.adapter == Adapter::anthropic) {
    const auto& content = body.at("content");
    std::string text;
    for (const auto& block : content) {
      if (block.value("type", "text") == "text") text += block.at("text").get<std::string>();
    }
    if (content.empty()) throw std::out_of_range("empty content");
    return text;
  }
  const auto& message = body.at("choices").at(0).at("message");
  const auto& content = message.at("content");
  if (content.is_null()) return {};
  return content.get<std::string>();
}

ProviderResponse HttpProvider::complete(const ProviderRequest& request) {
  if (request.user_text.empty()) {
    throw ProviderError(ProviderErrorKind::rejected, "empty user text");
  }

  httplib::Headers headers;
  if (!config_.credential_env.empty()) {
    const char* credential = std::getenv(config_.credential_env.c_str());
    if (credential == nullptr || *credential == '\0') {
      throw ProviderError(ProviderErrorKind::auth_failure,
                          "environment variable " + config_.credential_env + " is not set");
    }
    if (config_.adapter == Adapter::anthropic) {
      headers.emplace("x-api-key", credential);
      headers.emplace("anthropic-version", "2023-06-01");
    } else {
      headers.emplace("Authorization", std::string("Bearer ") + credential);
    }
  } else if (config_.adapter == Adapter::anthropic) {
    headers.emplace("anthropic-version", "2023-06-01");
  }

  const std::string payload = request_body(request).dump();
  const auto started = std::chrono::steady_clock::now();
  const int max_attempts = std::max(1, config_.retry.max_attempts);
  std::string last_failure;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    limiter_.acquire();

    httplib::Client client(endpoint_->scheme_host_port);
    if (!client.is_valid()) {
      throw ProviderError(ProviderErrorKind::rejected,
                          "cannot create client for " + endpoint_->scheme_host_port +
                              " (HTTPS needs a TLS-enabled build)",
                          attempt);
    }
    const auto ms = config_.retry.timeout.count();
    client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
    client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
    client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);

    auto result = client.Post(endpoint_->path, headers, payload, "application/json");
    std::chrono::milliseconds wait_hint{0};

    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
    } else if (result->status >= 200 && result->status < 300) {
      Json body = Json::parse(result->body, nullptr, false);
      if (body.is_discarded()) {
        throw ProviderError(ProviderErrorKind::malformed_response,
                            "response is not JSON: " + truncate_body(result->body), attempt);
      }
      ProviderResponse response;
      try {
        response.text = extract_text(body);
      } catch (const std::exception&) {
        throw ProviderError(ProviderErrorKind::malformed_response,
                            "response lacks completion text: " + truncate_body(result->body),
                            attempt);
      }
      response.attempt_count = attempt;
      response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - started);
      return response;
    } else if (result->status == 401 || result->status == 403) {
      throw ProviderError(ProviderErrorKind::auth_failure,
                          "HTTP " + std::to_string(result->status) + ": " +
                              truncate_body(result->body),
                          attempt);
    } else if (is_transient(result->status)) {
      last_failure = "HTTP " + std::to_string(result->status) + ": " + truncate_body(result->body);
      if (result->has_header("Retry-After")) {
        try {
          wait_hint = std::chrono::seconds(std::stoi(result->get_header_value("Retry-After")));
        } catch (const std::exception&) {
        }
      }
    } else {
      throw ProviderError(ProviderErrorKind::rejected,
                          "HTTP " + std::to_string(result->status) + ": " +
                              truncate_body(result->body),
                          attempt);
    }

    if (attempt < max_attempts) {
      std::chrono::milliseconds backoff = config_.retry.base_backoff * (1LL << std::min(attempt - 1, 20));
      backoff = std::min<std::chrono::milliseconds>(backoff, config_.retry.max_backoff);
      sleep_(std::max<std::chrono::milliseconds>(backoff, wait_hint));
    }
  }
  throw ProviderError(ProviderErrorKind::exhausted_retries,
                      "gave up after " + std::to_string(max_attempts) + " attempts; last: " +
                          last_failure,
                      max_attempts);
}

}  // namespace selbias
