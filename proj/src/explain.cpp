#include "fxplain/explain.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "fxplain/errors.hpp"
#include "fxplain/llm_client.hpp"
#include "fxplain/prompt.hpp"

namespace fxplain {

void ExplainConfig::validate() const {
  if (k < 1) throw ConfigError("explain.k must be >= 1");
  if (max_attempts < 1) throw ConfigError("explain.max_attempts must be >= 1");
}

bool is_sufficient(const SentimentModel& model, std::span<const std::string> terms, SentimentLabel target) {
  return model.classify(join_terms(terms)) == target;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// "1.", "2)", "-", "*", "•" and similar list markers.
std::string_view strip_bullet(std::string_view item) {
  item = trim(item);
  std::size_t i = 0;
  while (i < item.size() && item[i] >= '0' && item[i] <= '9') ++i;
  if (i > 0 && i < item.size() && (item[i] == '.' || item[i] == ')' || item[i] == ':')) {
    return trim(item.substr(i + 1));
  }
  if (!item.empty() && (item.front() == '-' || item.front() == '*' || item.front() == '+')) {
    return trim(item.substr(1));
  }
  constexpr std::string_view kBullet = "\xE2\x80\xA2";  // U+2022
  if (item.substr(0, kBullet.size()) == kBullet) return trim(item.substr(kBullet.size()));
  return item;
}

std::string_view strip_quotes(std::string_view item) {
  constexpr std::string_view kQuotes[] = {"\"", "'", "`", "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98",
                                          "\xE2\x80\x99"};
  bool changed = true;
  while (changed && !item.empty()) {
    changed = false;
    for (auto q : kQuotes) {
      if (item.substr(0, q.size()) == q) {
        item.remove_prefix(q.size());
        changed = true;
      }
      if (item.size() >= q.size() && item.substr(item.size() - q.size()) == q) {
        item.remove_suffix(q.size());
        changed = true;
      }
    }
    item = trim(item);
  }
  return item;
}

}  // namespace

std::vector<std::string> parse_term_list(std::string_view llm_output) {
  std::vector<std::string> terms;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= llm_output.size(); ++i) {
    if (i < llm_output.size() && llm_output[i] != ',' && llm_output[i] != '\n' && llm_output[i] != ';') continue;
    const auto item = strip_quotes(strip_bullet(llm_output.substr(begin, i - begin)));
    if (!item.empty()) terms.emplace_back(item);
    begin = i + 1;
  }
  return terms;
}

std::vector<std::string> validate_terms(std::span<const std::string> candidate, const Narrative& narrative,
                                        std::optional<int> k) {
  const std::unordered_set<std::string> present(narrative.tokens.begin(), narrative.tokens.end());
  std::vector<std::string> kept;
  std::unordered_set<std::string> seen;
  for (const auto& term : candidate) {
    for (auto& token : tokenize(term)) {
      if (!present.count(token) || seen.count(token)) continue;
      seen.insert(token);
      kept.push_back(std::move(token));
    }
  }
  if (k && kept.size() > static_cast<std::size_t>(std::max(*k, 0))) kept.resize(static_cast<std::size_t>(*k));
  return kept;
}

ExplainOutcome llm_sentiment_xplain(const SentimentModel& model, const Narrative& narrative,
                                    const CompletionFn& complete, const ExplainConfig& config) {
  config.validate();
  const SentimentLabel target = model.classify(narrative.raw_text);
  std::string prompt_text = prompt::initial(narrative.raw_text, config.k, target);

  int attempts = 0;
  std::optional<std::vector<std::string>> last;
  do {
    ++attempts;
    const std::string reply = complete(prompt_text);
    auto terms = validate_terms(parse_term_list(reply), narrative, config.k);
    const SentimentLabel got = model.classify(join_terms(terms));
    if (!terms.empty() && got == target) {
      Explanation found;
      found.terms = std::move(terms);
      found.target_sentiment = target;
      found.attempts_used = attempts;
      found.sufficient = true;
      if (config.require_minimality) found.minimal = check_minimal(model, found.terms, target);
      return found;
    }
    prompt_text += prompt::feedback(terms, got);
    last = std::move(terms);
  } while (attempts < config.max_attempts);

  return NoExplanation{attempts, target, std::move(last)};
}

ExplainOutcome llm_sentiment_xplain(const SentimentModel& model, const Narrative& narrative, LlmBackend& backend,
                                    const LlmRequest& request_template, const ExplainConfig& config) {
  return llm_sentiment_xplain(
      model, narrative,
      [&](const std::string& prompt_text) {
        LlmRequest request = request_template;
        request.prompt = prompt_text;
        return complete(backend, request);
      },
      config);
}

bool check_minimal(const SentimentModel& model, std::span<const std::string> terms, SentimentLabel target) {
  if (!is_sufficient(model, terms, target)) {
    throw std::invalid_argument("check_minimal: terms are not sufficient for the target sentiment");
  }
  std::vector<std::string> subset;
  subset.reserve(terms.size());
  for (std::size_t skip = 0; skip < terms.size(); ++skip) {
    subset.clear();
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (i != skip) subset.push_back(terms[i]);
    }
    if (is_sufficient(model, subset, target)) return false;
  }
  return true;
}

std::set<std::vector<std::string>> brute_force_sufficient_sets(const SentimentModel& model,
                                                               const Narrative& narrative, int k) {
  const auto& tokens = narrative.tokens;
  if (tokens.size() > kBruteForceMaxTokens) {
    throw std::invalid_argument("brute_force_sufficient_sets: narrative has " + std::to_string(tokens.size()) +
                                " tokens, limit is " + std::to_string(kBruteForceMaxTokens));
  }
  std::set<std::vector<std::string>> found;
  if (k < 0 || static_cast<std::size_t>(k) > tokens.size()) return found;

  const SentimentLabel target = model.classify(narrative.raw_text);
  const std::size_t n = tokens.size();
  std::vector<std::string> subset;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    subset.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) subset.push_back(tokens[i]);
    }
    if (is_sufficient(model, subset, target)) found.insert(subset);
  }
  return found;
}

// ---------------------------------------------------------------------------
// JSONL records
// ---------------------------------------------------------------------------

ExplanationRecord make_record(const ExplainOutcome& outcome, std::string news_id, std::string date, std::string pair,
                              std::string backend_id) {
  ExplanationRecord record;
  record.news_id = std::move(news_id);
  record.date = std::move(date);
  record.pair = std::move(pair);
  record.backend_id = std::move(backend_id);
  if (const auto* e = std::get_if<Explanation>(&outcome)) {
    record.sentiment = e->target_sentiment;
    record.terms = e->terms;
    record.attempts = e->attempts_used;
    record.sufficient = e->sufficient;
    record.minimal = e->minimal;
  } else {
    const auto& none = std::get<NoExplanation>(outcome);
    record.sentiment = none.target_sentiment;
    record.terms = none.last_candidate.value_or(std::vector<std::string>{});
    record.attempts = none.attempts_used;
    record.sufficient = false;
  }
  return record;
}

std::string to_jsonl(const ExplanationRecord& r) {
  nlohmann::ordered_json j;
  j["news_id"] = r.news_id;
  j["date"] = r.date;
  j["pair"] = r.pair;
  j["sentiment"] = std::string(to_string(r.sentiment));
  j["terms"] = r.terms;
  j["attempts"] = r.attempts;
  j["sufficient"] = r.sufficient;
  j["minimal"] = r.minimal ? nlohmann::ordered_json(*r.minimal) : nlohmann::ordered_json(nullptr);
  j["backend_id"] = r.backend_id;
  return j.dump();
}

ExplanationRecord parse_explanation_record(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ExplanationRecord r;
    r.news_id = j.at("news_id").get<std::string>();
    r.date = j.at("date").get<std::string>();
    r.pair = j.at("pair").get<std::string>();
    const auto label = parse_label(j.at("sentiment").get<std::string>());
    if (!label) throw ParseError("unknown sentiment in explanation record");
    r.sentiment = *label;
    r.terms = j.at("terms").get<std::vector<std::string>>();
    r.attempts = j.at("attempts").get<int>();
    r.sufficient = j.at("sufficient").get<bool>();
    if (j.contains("minimal") && !j.at("minimal").is_null()) r.minimal = j.at("minimal").get<bool>();
    r.backend_id = j.value("backend_id", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed explanation record: ") + e.what());
  }
}

}  // namespace fxplain
