#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "fxplain/errors.hpp"
#include "fxplain/features.hpp"
#include "synthetic.hpp"

using namespace fxplain;
using namespace std::chrono;

namespace {

using L = SentimentLabel;

// Fixed vectors for hand-checkable means.
class TableEmbedding final : public EmbeddingProvider {
 public:
  explicit TableEmbedding(std::map<std::string, std::vector<double>, std::less<>> table) : table_(std::move(table)) {}
  std::size_t dimension() const override { return 2; }
  std::vector<double> embed(std::string_view term) const override { return table_.find(term)->second; }
  std::string id() const override { return "table"; }

 private:
  std::map<std::string, std::vector<double>, std::less<>> table_;
};

Explanation sufficient(std::vector<std::string> terms) {
  Explanation e;
  e.terms = std::move(terms);
  e.sufficient = true;
  return e;
}

std::vector<DailyFeatures> series(std::size_t n, std::size_t dim = 0, double start = 1.0) {
  std::vector<DailyFeatures> days;
  const auto dates = fxtest::business_days(Date{year{2023}, January, day{2}}, n);
  for (std::size_t i = 0; i < n; ++i) {
    DailyFeatures d;
    d.date = dates[i];
    d.close = start + 0.01 * static_cast<double>(i);
    d.pct_pos = (i % 3 == 0) ? 1.0 : 0.0;
    d.pct_neg = 1.0 - d.pct_pos;
    d.term_embedding.assign(dim, 0.1 * static_cast<double>(i % 4));
    days.push_back(d);
  }
  return days;
}

}  // namespace

TEST_CASE("sentiment fractions") {
  auto f = sentiment_fractions(std::vector<L>{L::Positive, L::Positive, L::Negative, L::Neutral});
  CHECK(f.positive == 0.5);
  CHECK(f.neutral == 0.25);
  CHECK(f.negative == 0.25);
  f = sentiment_fractions(std::vector<L>{});
  CHECK(f.positive + f.neutral + f.negative == 0.0);
  f = sentiment_fractions(std::vector<L>{L::Positive, L::Positive});
  CHECK(f.positive == 1.0);
  CHECK(f.neutral == 0.0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<L> labels(1 + trial % 17);
    for (auto& l : labels) l = static_cast<L>(rng() % 3);
    const auto g = sentiment_fractions(labels);
    CHECK(g.positive + g.neutral + g.negative == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("hash embeddings are deterministic unit vectors") {
  const HashEmbedding e(64, 7);
  const auto v = e.embed("gains");
  REQUIRE(v.size() == 64);
  CHECK(v == HashEmbedding(64, 7).embed("gains"));
  CHECK(v != e.embed("boost"));
  CHECK(v != HashEmbedding(64, 8).embed("gains"));
  double norm = 0.0;
  for (double x : v) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(HashEmbedding(3).embed("x").size() == 3);
}

TEST_CASE("daily embedding average") {
  const TableEmbedding table({{"t1", {1.0, 0.0}}, {"t2", {0.0, 1.0}}});
  const std::vector<Explanation> one = {sufficient({"t1"})};
  CHECK(daily_embedding_average(table, one) == std::vector<double>{1.0, 0.0});
  const std::vector<Explanation> two = {sufficient({"t1", "t2"})};
  CHECK(daily_embedding_average(table, two) == std::vector<double>{0.5, 0.5});
  CHECK(daily_embedding_average(table, std::vector<Explanation>{}) == std::vector<double>{0.0, 0.0});

  Explanation failed;
  failed.terms = {"t2"};
  const std::vector<Explanation> mixed = {sufficient({"t1"}), failed};
  CHECK(daily_embedding_average(table, mixed) == std::vector<double>{1.0, 0.0});

  const std::vector<Explanation> dup = {sufficient({"t1", "t1"}), sufficient({"t2"})};
  const auto avg = daily_embedding_average(table, dup);
  CHECK(avg[0] == doctest::Approx(2.0 / 3.0));
  CHECK(avg[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("embedding average ignores term order") {
  const HashEmbedding e(16, 1);
  std::mt19937_64 rng(6);
  const char* vocab[] = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> terms;
    for (int i = 0; i < 7; ++i) terms.emplace_back(vocab[rng() % 6]);
    const auto before = daily_embedding_average(e, std::vector<Explanation>{sufficient(terms)});
    std::shuffle(terms.begin(), terms.end(), rng);
    const auto after = daily_embedding_average(e, std::vector<Explanation>{sufficient(terms)});
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-12));
  }
}

TEST_CASE("window counts and projection") {
  CHECK(build_windows(series(7), Variant::Baseline).size() == 2);
  CHECK(build_windows(series(5), Variant::Baseline).empty());
  CHECK(build_windows(series(0), Variant::Baseline).empty());
  for (std::size_t n = 0; n < 40; ++n) {
    CHECK(build_windows(series(n), Variant::Baseline).size() == (n > 5 ? n - 5 : 0));
  }

  const auto days = series(8, 3);
  const auto base = build_windows(days, Variant::Baseline);
  CHECK(base[0].inputs.size() == 5);
  CHECK(base[0].inputs[0].size() == 1);
  CHECK(build_windows(days, Variant::Sentiments)[0].inputs[0].size() == 4);
  CHECK(build_windows(days, Variant::SentimentsExplanations)[0].inputs[0].size() == 7);
  CHECK(input_dimension(Variant::SentimentsExplanations, 3) == 7);

  const auto& w = base[1];
  CHECK(w.target == days[6].close);
  CHECK(w.last_close == days[5].close);
  CHECK(w.inputs[0][0] == days[1].close);
  for (std::size_t j = 0; j < 6; ++j) CHECK(w.dates[j] == days[1 + j].date);

  auto shuffled = days;
  std::swap(shuffled[2], shuffled[3]);
  CHECK_THROWS_AS(build_windows(shuffled, Variant::Baseline), std::invalid_argument);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("baseline") == Variant::Baseline);
  CHECK(parse_variant("sentiments") == Variant::Sentiments);
  CHECK(parse_variant("explanations") == Variant::SentimentsExplanations);
  CHECK(parse_variant("sentiments+explanations") == Variant::SentimentsExplanations);
  CHECK_FALSE(parse_variant("lstm"));
}

TEST_CASE("normalizer centers, scales and inverts") {
  const auto windows = build_windows(series(30, 2), Variant::SentimentsExplanations);
  const std::span<const Window> train(windows.data(), 10);
  const auto stats = fit_normalizer(train);
  CHECK(stats.apply(0, stats.mean[0]) == 0.0);
  CHECK(stats.apply_target(stats.mean[0]) == 0.0);
  for (const auto& w : windows) {
    const auto back = invert(stats, apply(stats, w));
    CHECK(back.target == doctest::Approx(w.target).epsilon(1e-12));
    CHECK(back.last_close == doctest::Approx(w.last_close).epsilon(1e-12));
    for (std::size_t j = 0; j < w.inputs.size(); ++j) {
      for (std::size_t f = 0; f < w.inputs[j].size(); ++f) {
        CHECK(std::abs(back.inputs[j][f] - w.inputs[j][f]) <= 1e-12);
      }
    }
  }

  NormStats jpy;
  jpy.mean = {133.5069};
  jpy.stdev = {2.9260};
  CHECK(jpy.apply_target(140.8710) == doctest::Approx(2.5168).epsilon(1e-4));
}

TEST_CASE("constant features are only centered") {
  auto days = series(12, 0, 2.0);
  for (auto& d : days) d.close = 2.0;
  const auto windows = build_windows(days, Variant::Baseline);
  const auto stats = fit_normalizer(windows);
  CHECK(stats.mean[0] == 2.0);
  CHECK(stats.stdev[0] == 1.0);
  CHECK(apply(stats, windows[0]).target == 0.0);
  CHECK_THROWS_AS(fit_normalizer(std::vector<Window>{}), std::invalid_argument);
}

TEST_CASE("normalizer statistics ignore test windows") {
  auto days = series(40, 2);
  const auto stats = fit_normalizer(std::span<const Window>(build_windows(days, Variant::Sentiments)).first(20));
  for (std::size_t i = 26; i < days.size(); ++i) {
    days[i].close *= 50.0;
    days[i].pct_pos = 0.5;
  }
  const auto windows = build_windows(days, Variant::Sentiments);
  const auto again = fit_normalizer(std::span<const Window>(windows).first(20));
  CHECK(again.mean == stats.mean);
  CHECK(again.stdev == stats.stdev);
}

TEST_CASE("daily features from aligned news") {
  AlignedDay aligned;
  aligned.date = Date{year{2023}, January, day{3}};
  aligned.close = 1.07;
  DayInputs in{&aligned, {L::Positive, L::Negative}, {sufficient({"gains"})}};
  const HashEmbedding e(8);
  const auto f = make_daily_features(in, e);
  CHECK(f.close == 1.07);
  CHECK(f.pct_pos == 0.5);
  CHECK(f.pct_neg == 0.5);
  CHECK(f.term_embedding == e.embed("gains"));

  const auto csv = features_to_csv(std::vector<DailyFeatures>{f});
  CHECK(csv.rfind("date,close,pct_pos,pct_neu,pct_neg,e_0,", 0) == 0);
  CHECK(csv.find("e_7") != std::string::npos);
}
