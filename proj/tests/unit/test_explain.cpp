#include <doctest.h>

#include <random>
#include <stdexcept>

#include "fxplain/errors.hpp"
#include "fxplain/explain.hpp"
#include "fxplain/llm_client.hpp"
#include "fxplain/prompt.hpp"
#include "synthetic.hpp"

using namespace fxplain;

namespace {

using Terms = std::vector<std::string>;

LexiconModel sample_lexicon() {
  return LexiconModel({{"gains", 1.5}, {"boost", 1.2}, {"fall", -1.5}, {"risk", -0.8}}, 0.5);
}

const char* kEuroNews = "euro gains boost confidence amid stable outlook";

LlmRequest request_template() {
  LlmRequest r;
  r.prompt = "-";
  r.model_id = "test";
  return r;
}

}  // namespace

TEST_CASE("sufficiency follows the model on the joined terms") {
  const auto lex = sample_lexicon();
  CHECK(is_sufficient(lex, Terms{"gains"}, SentimentLabel::Positive));
  CHECK(is_sufficient(lex, Terms{"gains", "boost"}, SentimentLabel::Positive));
  CHECK_FALSE(is_sufficient(lex, Terms{"gains", "fall"}, SentimentLabel::Positive));
  CHECK(is_sufficient(lex, Terms{"gains", "fall"}, SentimentLabel::Neutral));
  CHECK(is_sufficient(lex, Terms{}, SentimentLabel::Neutral));
}

TEST_CASE("the full token list is always sufficient for its own label") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const auto lex = fxtest::make_micro_lexicon(rng);
    const Narrative n(fxtest::random_narrative(rng, lex, 1, 20));
    CHECK(is_sufficient(lex.model, n.tokens, lex.model.classify(n.raw_text)));
  }
}

TEST_CASE("candidate terms are parsed and validated against the narrative") {
  CHECK(parse_term_list("gains, boost") == Terms{"gains", "boost"});
  CHECK(parse_term_list("1. \"gains\"\n2. boost\n") == Terms{"gains", "boost"});
  CHECK(parse_term_list("- gains; - boost") == Terms{"gains", "boost"});
  CHECK(parse_term_list("").empty());

  const Narrative n(kEuroNews);
  CHECK(validate_terms(Terms{"Gains", "rally", "boost"}, n) == Terms{"gains", "boost"});
  CHECK(validate_terms(Terms{"gains", "gains", "boost"}, n) == Terms{"gains", "boost"});
  CHECK(validate_terms(Terms{"gains", "boost", "amid"}, n, 2) == Terms{"gains", "boost"});
  CHECK(validate_terms(Terms{"nothing"}, n).empty());
}

TEST_CASE("mock backend explains the euro headline on the first attempt") {
  const auto lex = sample_lexicon();
  MockLexiconBackend mock(lex);
  ExplainConfig cfg;
  cfg.k = 2;
  const auto out = llm_sentiment_xplain(lex, Narrative(kEuroNews), mock, request_template(), cfg);
  REQUIRE(std::holds_alternative<Explanation>(out));
  const auto& e = std::get<Explanation>(out);
  CHECK(e.terms == Terms{"gains", "boost"});
  CHECK(e.attempts_used == 1);
  CHECK(e.sufficient);
  CHECK(e.target_sentiment == SentimentLabel::Positive);
}

TEST_CASE("an unhelpful backend exhausts the attempt budget") {
  const auto lex = sample_lexicon();
  ScriptedBackend backend({"amid, stable"});
  ExplainConfig cfg;
  cfg.k = 2;
  const auto out = llm_sentiment_xplain(lex, Narrative(kEuroNews), backend, request_template(), cfg);
  REQUIRE(std::holds_alternative<NoExplanation>(out));
  const auto& miss = std::get<NoExplanation>(out);
  CHECK(miss.attempts_used == 3);
  CHECK(miss.target_sentiment == SentimentLabel::Positive);
  REQUIRE(miss.last_candidate);
  CHECK(*miss.last_candidate == Terms{"amid", "stable"});
  CHECK(backend.prompts().size() == 3);
}

TEST_CASE("each rejected candidate adds one feedback clause") {
  const auto lex = sample_lexicon();
  ScriptedBackend backend({"amid", "stable, outlook", "boost"});
  ExplainConfig cfg;
  cfg.k = 2;
  const auto out = llm_sentiment_xplain(lex, Narrative(kEuroNews), backend, request_template(), cfg);
  REQUIRE(std::holds_alternative<Explanation>(out));
  CHECK(std::get<Explanation>(out).attempts_used == 3);
  CHECK(std::get<Explanation>(out).terms == Terms{"boost"});

  const auto prompts = backend.prompts();
  REQUIRE(prompts.size() == 3);
  CHECK(prompts[0] == prompt::initial(kEuroNews, 2, SentimentLabel::Positive));
  CHECK(prompts[0] ==
        "given text: euro gains boost confidence amid stable outlook what are the top 2 terms that support its "
        "sentiment classification as: positive");
  CHECK(prompts[1] == prompts[0] + " the sentiment classification of: amid is neutral");
  CHECK(prompts[2] == prompts[1] + " the sentiment classification of: stable, outlook is neutral");
}

TEST_CASE("prompts parse back to their parts") {
  const auto text = prompt::initial("yen slides on risk", 3, SentimentLabel::Negative) +
                    prompt::feedback(Terms{"yen"}, SentimentLabel::Neutral);
  const auto parsed = prompt::parse(text);
  REQUIRE(parsed);
  CHECK(parsed->narrative == "yen slides on risk");
  CHECK(parsed->k == 3);
  CHECK(parsed->target == SentimentLabel::Negative);
  CHECK_FALSE(prompt::parse("hello there"));
}

TEST_CASE("backend errors propagate out of the loop") {
  const auto lex = sample_lexicon();
  MockLexiconBackend mock(lex);
  const CompletionFn broken = [](const std::string&) -> std::string { throw TransportError("down"); };
  CHECK_THROWS_AS(llm_sentiment_xplain(lex, Narrative(kEuroNews), broken, ExplainConfig{}), TransportError);
  CHECK_THROWS_AS(mock.complete(request_template()), ProtocolError);
}

TEST_CASE("explain config is validated") {
  ExplainConfig cfg;
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.k = 1;
  cfg.max_attempts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("minimality by leave-one-out") {
  const auto lex = sample_lexicon();
  CHECK_FALSE(check_minimal(lex, Terms{"gains", "boost"}, SentimentLabel::Positive));
  CHECK(check_minimal(lex, Terms{"gains"}, SentimentLabel::Positive));
  CHECK(check_minimal(lex, Terms{"boost"}, SentimentLabel::Positive));
  CHECK_THROWS_AS(check_minimal(lex, Terms{"amid"}, SentimentLabel::Positive), std::invalid_argument);

  ExplainConfig cfg;
  cfg.k = 2;
  cfg.require_minimality = true;
  ScriptedBackend backend({"gains, boost"});
  const auto out = llm_sentiment_xplain(lex, Narrative(kEuroNews), backend, request_template(), cfg);
  REQUIRE(std::holds_alternative<Explanation>(out));
  CHECK(std::get<Explanation>(out).minimal == false);
}

TEST_CASE("brute force enumerates sufficient subsets of a given size") {
  const auto lex = sample_lexicon();
  const Narrative n("gains fall boost");
  using Found = std::set<Terms>;
  CHECK(brute_force_sufficient_sets(lex, n, 1) == Found{{"gains"}, {"boost"}});
  CHECK(brute_force_sufficient_sets(lex, n, 2) == Found{{"gains", "boost"}});
  CHECK(brute_force_sufficient_sets(lex, n, 0).empty());
  CHECK(brute_force_sufficient_sets(lex, n, 3) == Found{{"gains", "fall", "boost"}});
  CHECK(brute_force_sufficient_sets(lex, n, 4).empty());

  std::string long_text;
  for (int i = 0; i < 21; ++i) long_text += "gains ";
  CHECK_THROWS_AS(brute_force_sufficient_sets(lex, Narrative(long_text), 1), std::invalid_argument);
}

TEST_CASE("accepted explanations are sufficient and drawn from the narrative") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto lex = fxtest::make_micro_lexicon(rng);
    const Narrative n(fxtest::random_narrative(rng, lex, 1, 18));
    MockLexiconBackend mock(lex.model, trial);
    ExplainConfig cfg;
    cfg.k = 1 + trial % 4;
    const auto out = llm_sentiment_xplain(lex.model, n, mock, request_template(), cfg);
    if (const auto* e = std::get_if<Explanation>(&out)) {
      CHECK(e->terms.size() <= static_cast<std::size_t>(cfg.k));
      CHECK(is_sufficient(lex.model, e->terms, lex.model.classify(n.raw_text)));
      for (const auto& t : e->terms) CHECK(std::find(n.tokens.begin(), n.tokens.end(), t) != n.tokens.end());
    } else {
      CHECK(std::get<NoExplanation>(out).attempts_used == cfg.max_attempts);
    }
  }
}

TEST_CASE("explanation records survive a JSONL round trip") {
  Explanation e;
  e.terms = {"gains", "boost"};
  e.target_sentiment = SentimentLabel::Positive;
  e.attempts_used = 2;
  e.sufficient = true;
  e.minimal = false;
  const auto rec = make_record(e, "n-1", "2023-02-01", "EURUSD", "mock");
  const auto line = to_jsonl(rec);
  CHECK(line.find('\n') == std::string::npos);
  const auto back = parse_explanation_record(line);
  CHECK(back.news_id == "n-1");
  CHECK(back.date == "2023-02-01");
  CHECK(back.pair == "EURUSD");
  CHECK(back.sentiment == SentimentLabel::Positive);
  CHECK(back.terms == e.terms);
  CHECK(back.attempts == 2);
  CHECK(back.sufficient);
  CHECK(back.minimal == false);
  CHECK(to_jsonl(back) == line);

  const auto miss = make_record(NoExplanation{3, SentimentLabel::Negative, Terms{"amid"}}, "n-2", "2023-02-02",
                                "EURUSD", "constant");
  CHECK_FALSE(miss.sufficient);
  CHECK(parse_explanation_record(to_jsonl(miss)).attempts == 3);
  CHECK_THROWS_AS(parse_explanation_record("{not json"), ParseError);
}
