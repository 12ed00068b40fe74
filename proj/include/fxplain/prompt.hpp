#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fxplain/sentiment.hpp"

namespace fxplain::prompt {

// Literal pieces of the explanation prompt. The mock backend parses prompts
// by these delimiters, so changing them changes the mock's behaviour too.
inline constexpr std::string_view kGivenText = "given text:";
inline constexpr std::string_view kWhatAreTheTop = "what are the top";
inline constexpr std::string_view kTermsThatSupport = "terms that support its sentiment classification as:";
inline constexpr std::string_view kFeedbackOf = "the sentiment classification of:";
inline constexpr std::string_view kFeedbackIs = "is";

/// "given text: <X> what are the top <K> terms that support its sentiment
/// classification as: <s>"
std::string initial(std::string_view narrative, int k, SentimentLabel sentiment);

/// " the sentiment classification of: <t1, t2, ...> is <s'>", appended to the
/// prompt after each rejected candidate.
std::string feedback(std::span<const std::string> terms, SentimentLabel sentiment);

struct Parsed {
  std::string narrative;
  int k = 0;
  SentimentLabel target = SentimentLabel::Neutral;
};

/// Recovers the narrative, K and target sentiment from a prompt built by
/// initial() (with or without feedback clauses). nullopt if it does not match.
std::optional<Parsed> parse(std::string_view text);

}  // namespace fxplain::prompt
