#include "fxplain/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fxplain/errors.hpp"
#include "fxplain/hashing.hpp"
#include "fxplain/prompt.hpp"

namespace fxplain {

using nlohmann::json;

void LlmRequest::validate() const {
  if (prompt.empty()) throw ConfigError("LLM request prompt is empty");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

std::string complete(LlmBackend& backend, const LlmRequest& request) {
  request.validate();
  return backend.complete(request);
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

namespace {

std::uint64_t tie_key(std::uint64_t seed, const std::string& token) {
  const auto digest = sha256(std::to_string(seed) + '\x1f' + token);
  std::uint64_t key = 0;
  for (int i = 0; i < 8; ++i) key = (key << 8) | digest[i];
  return key;
}

}  // namespace

MockLexiconBackend::MockLexiconBackend(LexiconModel lexicon, std::uint64_t seed)
    : lexicon_(std::move(lexicon)), seed_(seed) {}

std::string MockLexiconBackend::id() const {
  return "mock:" + lexicon_.digest().substr(0, 12) + ":" + std::to_string(seed_);
}

std::string MockLexiconBackend::complete(const LlmRequest& request) {
  const auto parsed = prompt::parse(request.prompt);
  if (!parsed) throw ProtocolError("mock backend: prompt does not follow the explanation template");

  struct Candidate {
    std::string token;
    double valence;
    std::size_t position;
    std::uint64_t tie;
  };
  std::vector<Candidate> candidates;
  for (auto& token : tokenize(parsed->narrative)) {
    const bool seen = std::any_of(candidates.begin(), candidates.end(),
                                  [&](const Candidate& c) { return c.token == token; });
    if (seen) continue;
    const double v = lexicon_.valence(token);
    const std::uint64_t tie = seed_ == 0 ? candidates.size() : tie_key(seed_, token);
    candidates.push_back({std::move(token), v, candidates.size(), tie});
  }

  const auto target = parsed->target;
  auto strength = [&](const Candidate& c) {
    switch (target) {
      case SentimentLabel::Positive: return c.valence;
      case SentimentLabel::Negative: return -c.valence;
      case SentimentLabel::Neutral: return -std::abs(c.valence);
    }
    return 0.0;
  };
  std::stable_sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    const double sa = strength(a), sb = strength(b);
    if (sa != sb) return sa > sb;
    return a.tie < b.tie;
  });

  const auto k = static_cast<std::size_t>(std::max(parsed->k, 0));
  std::vector<std::string> picked;
  double running = 0.0;
  for (const auto& c : candidates) {
    if (picked.size() >= k) break;
    if (target == SentimentLabel::Neutral) {
      if (std::abs(running + c.valence) > lexicon_.neutral_band()) continue;
    } else if (strength(c) <= 0.0) {
      break;
    }
    running += c.valence;
    picked.push_back(c.token);
  }
  // Nothing supports the target: answer with the strongest tokens anyway,
  // the way an unhelpful model would.
  if (picked.empty()) {
    for (std::size_t i = 0; i < candidates.size() && i < k; ++i) picked.push_back(candidates[i].token);
  }

  std::string out;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    if (i) out += ", ";
    out += picked[i];
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {
  if (responses_.empty()) throw ConfigError("scripted backend needs at least one response");
}

std::string ScriptedBackend::complete(const LlmRequest& request) {
  std::lock_guard lock(mutex_);
  prompts_.push_back(request.prompt);
  const auto index = std::min(prompts_.size() - 1, responses_.size() - 1);
  return responses_[index];
}

std::vector<std::string> ScriptedBackend::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

// ---------------------------------------------------------------------------
// HTTP plumbing
// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second), burst_(std::max(burst, 1.0)), tokens_(burst_), last_(Clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0.0) return;
  Clock::duration wait{};
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    tokens_ -= 1.0;
    if (tokens_ < 0.0) {
      wait = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(-tokens_ / rate_));
    }
  }
  if (wait > Clock::duration::zero()) std::this_thread::sleep_for(wait);
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash, may be empty
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_begin);
  if (path_begin != std::string::npos) {
    out.prefix = url.substr(path_begin);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : fallback;
}

bool retryable(int status) { return status == 429 || status >= 500; }

// Issues `send` until it yields a 2xx, backing off exponentially on
// connection failures, 429 and 5xx.
template <typename Send>
std::string send_with_retries(const RetryPolicy& policy, const std::string& what, std::atomic<std::size_t>& calls,
                              const std::shared_ptr<RateLimiter>& limiter, Send&& send) {
  auto backoff = policy.initial_backoff;
  std::string last_failure;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("{}: {}; retrying in {} ms", what, last_failure, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff = std::min(policy.max_backoff, std::chrono::milliseconds(static_cast<long long>(
                                                 static_cast<double>(backoff.count()) * policy.multiplier)));
    }
    if (limiter) limiter->acquire();
    ++calls;
    httplib::Result result = send();
    if (!result) {
      last_failure = "connection error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) return result->body;
    last_failure = "HTTP " + std::to_string(result->status);
    if (!retryable(result->status)) {
      throw TransportError(what + ": " + last_failure + ": " + result->body.substr(0, 300));
    }
  }
  throw TransportError(what + ": retries exhausted after " + std::to_string(policy.max_retries + 1) +
                       " attempts (" + last_failure + ")");
}

httplib::Client make_client(const std::string& origin, std::chrono::seconds timeout) {
  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

json parse_payload(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(what + ": response is not JSON: " + e.what());
  }
}

}  // namespace

OpenAiBackend::OpenAiBackend(std::string api_key, HttpSettings settings)
    : api_key_(std::move(api_key)), settings_(std::move(settings)) {
  if (api_key_.empty()) throw ConfigError("OpenAI backend: OPENAI_API_KEY is not set");
  if (settings_.base_url.empty()) settings_.base_url = kDefaultBaseUrl;
}

std::unique_ptr<OpenAiBackend> OpenAiBackend::from_env(HttpSettings settings) {
  if (settings.base_url.empty()) settings.base_url = env_or("OPENAI_BASE_URL", kDefaultBaseUrl);
  return std::make_unique<OpenAiBackend>(env_or("OPENAI_API_KEY", ""), std::move(settings));
}

std::string OpenAiBackend::complete(const LlmRequest& request) {
  request.validate();
  const auto url = split_url(settings_.base_url);
  const json body = {
      {"model", request.model_id},
      {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"top_p", request.top_p},
      {"max_tokens", request.max_tokens},
  };
  const std::string payload = body.dump();
  const std::string path = url.prefix + "/v1/chat/completions";
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

  const std::string response =
      send_with_retries(settings_.retry, "openai", http_calls_, settings_.limiter, [&] {
        auto client = make_client(url.origin, settings_.timeout);
        return client.Post(path, headers, payload, "application/json");
      });
  const json parsed = parse_payload(response, "openai");
  try {
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("openai: unexpected payload shape: ") + e.what());
  }
}

WatsonxBackend::WatsonxBackend(std::string api_key, std::string project_id, HttpSettings settings,
                               std::string iam_url)
    : api_key_(std::move(api_key)),
      project_id_(std::move(project_id)),
      settings_(std::move(settings)),
      iam_url_(std::move(iam_url)) {
  if (api_key_.empty()) throw ConfigError("watsonx backend: WATSONX_API_KEY is not set");
  if (project_id_.empty()) throw ConfigError("watsonx backend: WATSONX_PROJECT_ID is not set");
  if (settings_.base_url.empty()) settings_.base_url = kDefaultBaseUrl;
}

std::unique_ptr<WatsonxBackend> WatsonxBackend::from_env(HttpSettings settings) {
  if (settings.base_url.empty()) settings.base_url = env_or("WATSONX_URL", kDefaultBaseUrl);
  return std::make_unique<WatsonxBackend>(env_or("WATSONX_API_KEY", ""), env_or("WATSONX_PROJECT_ID", ""),
                                          std::move(settings), env_or("WATSONX_IAM_URL", kDefaultIamUrl));
}

std::string WatsonxBackend::bearer_token() {
  std::lock_guard lock(token_mutex_);
  const auto now = std::chrono::steady_clock::now();
  if (!token_.empty() && now < token_expiry_) return token_;

  const auto url = split_url(iam_url_);
  const httplib::Params form = {
      {"grant_type", "urn:ibm:params:oauth:grant-type:apikey"},
      {"apikey", api_key_},
  };
  const std::string body =
      send_with_retries(settings_.retry, "watsonx iam", http_calls_, nullptr, [&] {
        auto client = make_client(url.origin, settings_.timeout);
        return client.Post(url.prefix + "/identity/token", form);
      });
  const json parsed = parse_payload(body, "watsonx iam");
  try {
    token_ = parsed.at("access_token").get<std::string>();
    const long long expires_in = parsed.value("expires_in", 3600LL);
    token_expiry_ = now + std::chrono::seconds(std::max(0LL, expires_in - 60));
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("watsonx iam: unexpected payload shape: ") + e.what());
  }
  return token_;
}

std::string WatsonxBackend::complete(const LlmRequest& request) {
  request.validate();
  const auto url = split_url(settings_.base_url);
  json parameters = {
      {"decoding_method", request.temperature == 0.0 ? "greedy" : "sample"},
      {"max_new_tokens", request.max_tokens},
  };
  if (request.temperature > 0.0) {
    parameters["temperature"] = request.temperature;
    parameters["top_p"] = request.top_p;
  }
  const json body = {
      {"model_id", request.model_id},
      {"input", request.prompt},
      {"project_id", project_id_},
      {"parameters", parameters},
  };
  const std::string payload = body.dump();
  const std::string path = url.prefix + "/ml/v1/text/generation?version=" + kApiVersion;
  const httplib::Headers headers = {{"Authorization", "Bearer " + bearer_token()}};

  const std::string response =
      send_with_retries(settings_.retry, "watsonx", http_calls_, settings_.limiter, [&] {
        auto client = make_client(url.origin, settings_.timeout);
        return client.Post(path, headers, payload, "application/json");
      });
  const json parsed = parse_payload(response, "watsonx");
  try {
    return parsed.at("results").at(0).at("generated_text").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("watsonx: unexpected payload shape: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

namespace {

json request_json(const std::string& backend_id, const LlmRequest& r) {
  return {{"backend_id", backend_id}, {"model_id", r.model_id},   {"prompt", r.prompt},
          {"temperature", r.temperature}, {"top_p", r.top_p}, {"max_tokens", r.max_tokens}};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

CacheKey make_cache_key(const std::string& backend_id, const LlmRequest& r) {
  const json key = json::array({backend_id, r.model_id, r.prompt, r.temperature, r.top_p, r.max_tokens});
  return {sha256_hex(key.dump())};
}

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) {
    std::ofstream create(path_, std::ios::app);
    if (!create) throw CacheError("cannot create cache file " + path_);
    return;
  }
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      const json record = json::parse(line);
      entries_[record.at("digest").get<std::string>()] = record.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw CacheError("corrupt cache record at " + path_ + ":" + std::to_string(row) + ": " + e.what());
    }
  }
  if (in.bad()) throw CacheError("failed reading cache file " + path_);
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key.digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const CacheKey& key, const std::string& backend_id, const LlmRequest& request,
                          const std::string& response) {
  std::unique_lock lock(mutex_);
  if (entries_.count(key.digest)) return;
  const json record = {{"digest", key.digest},
                       {"request", request_json(backend_id, request)},
                       {"response", response},
                       {"timestamp", utc_timestamp()}};
  std::ofstream out(path_, std::ios::app);
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw CacheError("failed writing cache file " + path_);
  entries_.emplace(key.digest, response);
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string cached_complete(ResponseCache& cache, LlmBackend& backend, const LlmRequest& request) {
  request.validate();
  const auto key = make_cache_key(backend.id(), request);
  if (auto hit = cache.lookup(key)) return *hit;
  std::string response = backend.complete(request);
  cache.store(key, backend.id(), request, response);
  return response;
}

}  // namespace fxplain
