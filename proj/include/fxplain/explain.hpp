#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fxplain/sentiment.hpp"

namespace fxplain {

class LlmBackend;
struct LlmRequest;

struct Narrative {
  std::string raw_text;
  std::vector<std::string> tokens;

  explicit Narrative(std::string text) : raw_text(std::move(text)), tokens(tokenize(raw_text)) {}
};

struct ExplainConfig {
  int k = 3;
  int max_attempts = 3;
  bool require_minimality = false;

  /// Throws ConfigError unless k >= 1 and max_attempts >= 1.
  void validate() const;
};

/// A candidate set of terms taken from the narrative, with its verdicts.
struct Explanation {
  std::vector<std::string> terms;
  SentimentLabel target_sentiment = SentimentLabel::Neutral;
  int attempts_used = 0;
  bool sufficient = false;
  std::optional<bool> minimal;
};

/// The loop ran out of attempts without a sufficient candidate.
struct NoExplanation {
  int attempts_used = 0;
  SentimentLabel target_sentiment = SentimentLabel::Neutral;
  std::optional<std::vector<std::string>> last_candidate;
};

using ExplainOutcome = std::variant<Explanation, NoExplanation>;

/// Sends one prompt to the LLM and returns its raw text. Lets callers route
/// completions through a cache.
using CompletionFn = std::function<std::string(const std::string& prompt)>;

/// True iff M classifies the space-join of `terms` (in the given order) as
/// `target`.
bool is_sufficient(const SentimentModel& model, std::span<const std::string> terms, SentimentLabel target);

/// Splits free LLM text into candidate terms: comma/semicolon/newline
/// separated, list bullets and numbering removed, surrounding quotes removed.
std::vector<std::string> parse_term_list(std::string_view llm_output);

/// Tokenizes each candidate, keeps tokens present in the narrative, drops
/// duplicates (first occurrence wins) and truncates to `k` when given.
std::vector<std::string> validate_terms(std::span<const std::string> candidate, const Narrative& narrative,
                                        std::optional<int> k = std::nullopt);

/// The verify-and-retry explanation loop. Each rejected candidate appends one
/// feedback clause to the prompt. Backend errors propagate unchanged.
ExplainOutcome llm_sentiment_xplain(const SentimentModel& model, const Narrative& narrative,
                                    const CompletionFn& complete, const ExplainConfig& config);

/// Convenience overload: sends prompts straight to `backend` using
/// `request_template` for the decoding parameters.
ExplainOutcome llm_sentiment_xplain(const SentimentModel& model, const Narrative& narrative, LlmBackend& backend,
                                    const LlmRequest& request_template, const ExplainConfig& config);

/// True iff no subset of size |terms|-1 (order preserved) is sufficient.
/// Throws std::invalid_argument when `terms` is not itself sufficient.
bool check_minimal(const SentimentModel& model, std::span<const std::string> terms, SentimentLabel target);

/// Every size-k subset of the narrative's tokens (narrative order) that is
/// sufficient for M(narrative). Throws std::invalid_argument above
/// kBruteForceMaxTokens tokens.
inline constexpr std::size_t kBruteForceMaxTokens = 20;
std::set<std::vector<std::string>> brute_force_sufficient_sets(const SentimentModel& model,
                                                               const Narrative& narrative, int k);

/// One line of the explanations JSONL file.
struct ExplanationRecord {
  std::string news_id;
  std::string date;  // YYYY-MM-DD
  std::string pair;
  SentimentLabel sentiment = SentimentLabel::Neutral;
  std::vector<std::string> terms;
  int attempts = 0;
  bool sufficient = false;
  std::optional<bool> minimal;
  std::string backend_id;
};

ExplanationRecord make_record(const ExplainOutcome& outcome, std::string news_id, std::string date, std::string pair,
                              std::string backend_id);
/// Single-line JSON with a fixed key order.
std::string to_jsonl(const ExplanationRecord& record);
/// Throws ParseError on malformed lines.
ExplanationRecord parse_explanation_record(std::string_view line);

}  // namespace fxplain
