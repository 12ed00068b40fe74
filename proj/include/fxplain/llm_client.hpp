#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "fxplain/sentiment.hpp"

namespace fxplain {

struct LlmRequest {
  std::string prompt;
  std::string model_id;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 64;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// The LLM port: prompt in, free text out. Implementations must tolerate
/// concurrent calls.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const LlmRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Validates the request, then forwards to the backend.
std::string complete(LlmBackend& backend, const LlmRequest& request);

// ---------------------------------------------------------------------------
// Offline backends
// ---------------------------------------------------------------------------

/// Reads the narrative, K and target label back out of an explanation prompt
/// and answers with the K narrative tokens whose valence best supports the
/// target. A pure function of (prompt, seed); `seed` only reorders ties.
/// Throws ProtocolError when the prompt does not follow the explanation
/// template.
class MockLexiconBackend final : public LlmBackend {
 public:
  explicit MockLexiconBackend(LexiconModel lexicon, std::uint64_t seed = 0);
  std::string complete(const LlmRequest& request) override;
  std::string id() const override;

 private:
  LexiconModel lexicon_;
  std::uint64_t seed_;
};

/// Always returns the same text.
class ConstantBackend final : public LlmBackend {
 public:
  explicit ConstantBackend(std::string response) : response_(std::move(response)) {}
  std::string complete(const LlmRequest&) override { return response_; }
  std::string id() const override { return "constant"; }

 private:
  std::string response_;
};

/// Replays a fixed list of responses in order, repeating the last one, and
/// records every prompt it receives.
class ScriptedBackend final : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses);
  std::string complete(const LlmRequest& request) override;
  std::string id() const override { return "scripted"; }
  std::vector<std::string> prompts() const;

 private:
  std::vector<std::string> responses_;
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
};

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

/// Token bucket shared by all threads that talk to one backend.
/// `requests_per_second <= 0` disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second, double burst = 1.0);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct HttpSettings {
  std::string base_url;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
  std::shared_ptr<RateLimiter> limiter;
};

/// OpenAI-compatible chat completions (`POST {base}/v1/chat/completions`).
class OpenAiBackend final : public LlmBackend {
 public:
  static constexpr const char* kDefaultBaseUrl = "https://api.openai.com";

  /// Throws ConfigError when `api_key` is empty.
  OpenAiBackend(std::string api_key, HttpSettings settings);
  /// Reads OPENAI_API_KEY and the optional OPENAI_BASE_URL override.
  static std::unique_ptr<OpenAiBackend> from_env(HttpSettings settings = {});

  std::string complete(const LlmRequest& request) override;
  std::string id() const override { return "openai"; }
  /// HTTP requests issued so far, including retries.
  std::size_t http_calls() const noexcept { return http_calls_; }

 private:
  std::string api_key_;
  HttpSettings settings_;
  std::atomic<std::size_t> http_calls_{0};
};

/// watsonx.ai text generation. The API key is exchanged for an IAM bearer
/// token, which is cached until shortly before it expires.
class WatsonxBackend final : public LlmBackend {
 public:
  static constexpr const char* kDefaultBaseUrl = "https://us-south.ml.cloud.ibm.com";
  static constexpr const char* kDefaultIamUrl = "https://iam.cloud.ibm.com";
  static constexpr const char* kApiVersion = "2023-05-29";

  /// Throws ConfigError when `api_key` or `project_id` is empty.
  WatsonxBackend(std::string api_key, std::string project_id, HttpSettings settings,
                 std::string iam_url = kDefaultIamUrl);
  /// Reads WATSONX_API_KEY, WATSONX_PROJECT_ID and the optional WATSONX_URL /
  /// WATSONX_IAM_URL overrides.
  static std::unique_ptr<WatsonxBackend> from_env(HttpSettings settings = {});

  std::string complete(const LlmRequest& request) override;
  std::string id() const override { return "watsonx"; }
  std::size_t http_calls() const noexcept { return http_calls_; }

 private:
  std::string bearer_token();

  std::string api_key_;
  std::string project_id_;
  HttpSettings settings_;
  std::string iam_url_;
  std::mutex token_mutex_;
  std::string token_;
  std::chrono::steady_clock::time_point token_expiry_{};
  std::atomic<std::size_t> http_calls_{0};
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

struct CacheKey {
  std::string digest;
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

/// SHA-256 over a fixed JSON array of (backend_id, model_id, prompt,
/// temperature, top_p, max_tokens).
CacheKey make_cache_key(const std::string& backend_id, const LlmRequest& request);

/// Append-only JSONL store of completions. Each line is
/// {digest, request, response, timestamp}. Reads are concurrent, writes are
/// serialized and flushed immediately.
class ResponseCache {
 public:
  /// Loads existing records. Throws CacheError on unreadable or corrupt files.
  explicit ResponseCache(std::string path);

  std::optional<std::string> lookup(const CacheKey& key) const;
  void store(const CacheKey& key, const std::string& backend_id, const LlmRequest& request,
             const std::string& response);
  std::size_t size() const;
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
};

/// Cache hit: stored text, no backend call. Miss: complete, store, return.
std::string cached_complete(ResponseCache& cache, LlmBackend& backend, const LlmRequest& request);

}  // namespace fxplain
