#include "fxplain/prompt.hpp"

#include <charconv>

namespace fxplain::prompt {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string initial(std::string_view narrative, int k, SentimentLabel sentiment) {
  std::string out;
  out += kGivenText;
  out += ' ';
  out += narrative;
  out += ' ';
  out += kWhatAreTheTop;
  out += ' ';
  out += std::to_string(k);
  out += ' ';
  out += kTermsThatSupport;
  out += ' ';
  out += to_string(sentiment);
  return out;
}

std::string feedback(std::span<const std::string> terms, SentimentLabel sentiment) {
  std::string out = " ";
  out += kFeedbackOf;
  out += ' ';
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out += ", ";
    out += terms[i];
  }
  out += ' ';
  out += kFeedbackIs;
  out += ' ';
  out += to_string(sentiment);
  return out;
}

std::optional<Parsed> parse(std::string_view text) {
  const auto given = text.find(kGivenText);
  if (given == std::string_view::npos) return std::nullopt;
  const auto narrative_begin = given + kGivenText.size();
  // The narrative itself may contain "what are the top"; the template puts
  // the real delimiter last before the K clause, so search backwards from it.
  const auto support = text.find(kTermsThatSupport, narrative_begin);
  if (support == std::string_view::npos) return std::nullopt;
  const auto top = text.rfind(kWhatAreTheTop, support);
  if (top == std::string_view::npos || top < narrative_begin) return std::nullopt;

  Parsed parsed;
  parsed.narrative = std::string(trim(text.substr(narrative_begin, top - narrative_begin)));

  const auto k_text = trim(text.substr(top + kWhatAreTheTop.size(), support - top - kWhatAreTheTop.size()));
  const auto [ptr, ec] = std::from_chars(k_text.data(), k_text.data() + k_text.size(), parsed.k);
  if (ec != std::errc{} || ptr != k_text.data() + k_text.size() || parsed.k < 0) return std::nullopt;

  auto rest = trim(text.substr(support + kTermsThatSupport.size()));
  const auto word_end = rest.find_first_of(" \t\r\n");
  const auto label = parse_label(rest.substr(0, word_end));
  if (!label) return std::nullopt;
  parsed.target = *label;
  return parsed;
}

}  // namespace fxplain::prompt
